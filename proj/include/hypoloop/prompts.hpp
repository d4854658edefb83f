#pragma once

#include <map>
#include <string>
#include <string_view>

namespace hypoloop::prompts {

// Version tag of the shipped template files under prompts/.
inline constexpr std::string_view kVersion = "v1";

std::string_view hypo_seed();
std::string_view hypo_exploit();
std::string_view hypo_explore();
std::string_view emb_single();
std::string_view emb_batch();

// Replaces every {{name}} with vars.at(name). Unknown or unused placeholders
// are errors, so template drift is caught by the golden tests.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars);

}  // namespace hypoloop::prompts
