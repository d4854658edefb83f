#include "hypoloop/prompts.hpp"

#include <set>

#include "hypoloop/errors.hpp"
#include "prompt_templates.hpp"  // generated from prompts/*.txt

namespace hypoloop::prompts {

std::string_view hypo_seed() { return generated::kHypoSeed; }
std::string_view hypo_exploit() { return generated::kHypoExploit; }
std::string_view hypo_explore() { return generated::kHypoExplore; }
std::string_view emb_single() { return generated::kEmb; }
std::string_view emb_batch() { return generated::kEmbBatch; }

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::set<std::string> used;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(tmpl.substr(pos));
      break;
    }
    const std::size_t close = tmpl.find("}}", open + 2);
    if (close == std::string_view::npos) throw Error("unterminated placeholder in prompt template");
    out.append(tmpl.substr(pos, open - pos));
    const std::string name(tmpl.substr(open + 2, close - open - 2));
    const auto it = vars.find(name);
    if (it == vars.end()) throw Error("prompt template placeholder '" + name + "' has no value");
    out += it->second;
    used.insert(name);
    pos = close + 2;
  }
  for (const auto& [name, value] : vars) {
    if (!used.count(name)) throw Error("prompt variable '" + name + "' is not used by the template");
  }
  return out;
}

}  // namespace hypoloop::prompts
