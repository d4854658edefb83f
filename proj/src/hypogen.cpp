#include "hypoloop/hypogen.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "hypoloop/prompts.hpp"
#include "hypoloop/util.hpp"

namespace hypoloop {

using nlohmann::json;

void GenerationRequest::validate() const {
  if (prior_pvalues.size() != prior_set.k()) {
    throw DomainError("prior p-values (" + std::to_string(prior_pvalues.size()) +
                      ") do not align with the prior set (" + std::to_string(prior_set.k()) + ")");
  }
  if (m_new < 1) throw DomainError("m_new must be at least 1");
  if (!prior_set.empty() && m_new > prior_set.k()) {
    throw DomainError("m_new exceeds the set size");
  }
  for (double p : prior_pvalues) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("prior p-values must lie in [0, 1]");
  }
}

GenerationMode choose_prompt_mode(SplitMix64& rng, double p_explore) {
  if (!(p_explore >= 0.0 && p_explore <= 1.0)) {
    throw ValidationError("p_explore must lie in [0, 1]");
  }
  return rng.uniform() < p_explore ? GenerationMode::explore : GenerationMode::exploit;
}

namespace {

std::string format_alpha(double alpha) {
  std::ostringstream ss;
  ss << alpha;
  return ss.str();
}

std::string options_suffix(const Hypothesis& h) {
  if (h.options() == Hypothesis::default_options()) return "";
  std::string s = " (options: ";
  for (std::size_t i = 0; i < h.options().size(); ++i) {
    if (i) s += " | ";
    s += h.options()[i];
  }
  return s + ")";
}

}  // namespace

std::string render_prompt(const GenerationRequest& request) {
  request.validate();
  const std::string m = std::to_string(request.m_new);
  if (request.prior_set.empty()) {
    return prompts::render(prompts::hypo_seed(),
                           {{"domain_context", request.domain_context}, {"m_new", m}});
  }
  if (request.mode == GenerationMode::explore) {
    std::string list;
    for (const auto& h : request.prior_set.members()) {
      list += "- " + h.question() + options_suffix(h) + "\n";
    }
    if (!list.empty()) list.pop_back();
    return prompts::render(prompts::hypo_explore(), {{"domain_context", request.domain_context},
                                                     {"prior_list", list},
                                                     {"m_new", m}});
  }
  std::string table;
  for (std::size_t j = 0; j < request.prior_set.k(); ++j) {
    const double p = request.prior_pvalues[j];
    const auto& h = request.prior_set[j];
    table += std::to_string(j + 1) + ". [" + (p <= request.alpha ? "+" : "-") +
             "] p=" + format_fixed(p, 4) + "  " + h.question() + options_suffix(h) + "\n";
  }
  table.pop_back();
  return prompts::render(prompts::hypo_exploit(), {{"domain_context", request.domain_context},
                                                   {"alpha", format_alpha(request.alpha)},
                                                   {"prior_table", table},
                                                   {"m_new", m}});
}

namespace {

// End index (inclusive) of the bracket that closes reply[open], honouring JSON
// string literals; npos when unbalanced.
std::size_t matching_bracket(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '[' || c == '{') {
      ++depth;
    } else if (c == ']' || c == '}') {
      if (--depth == 0) return i;
    }
  }
  return std::string_view::npos;
}

bool looks_like_hypothesis_array(const json& j) {
  if (!j.is_array() || j.empty()) return false;
  for (const auto& item : j) {
    if (item.is_object() && item.contains("question")) return true;
  }
  return false;
}

}  // namespace

std::vector<Hypothesis> parse_generation(std::string_view reply, std::size_t m_new,
                                         const std::vector<std::string>& exclude,
                                         GenerationMode origin, int created_iter) {
  json items;
  bool found = false;
  for (std::size_t pos = reply.find('['); pos != std::string_view::npos;
       pos = reply.find('[', pos + 1)) {
    const std::size_t end = matching_bracket(reply, pos);
    if (end == std::string_view::npos) continue;
    try {
      json candidate = json::parse(reply.substr(pos, end - pos + 1));
      if (looks_like_hypothesis_array(candidate)) {
        items = std::move(candidate);
        found = true;
        break;
      }
    } catch (const json::exception&) {
    }
  }
  if (!found) throw ParseError("no array of {question, options} objects in model reply");

  std::set<std::string> seen;
  for (const auto& q : exclude) {
    try {
      seen.insert(normalize_question(q));
    } catch (const ValidationError&) {
    }
  }
  std::vector<Hypothesis> out;
  for (const auto& item : items) {
    if (out.size() >= m_new) break;
    if (!item.is_object() || !item.contains("question") || !item["question"].is_string()) continue;
    std::vector<std::string> options = Hypothesis::default_options();
    if (item.contains("options") && !item["options"].is_null()) {
      if (!item["options"].is_array()) continue;
      options.clear();
      bool ok = true;
      for (const auto& o : item["options"]) {
        if (!o.is_string()) {
          ok = false;
          break;
        }
        options.push_back(o.get<std::string>());
      }
      if (!ok) continue;
    }
    try {
      auto h = Hypothesis::make(item["question"].get<std::string>(), std::move(options), origin,
                                created_iter);
      if (!seen.insert(h.canonical()).second) continue;
      out.push_back(std::move(h));
    } catch (const ValidationError&) {
      continue;
    }
  }
  if (out.size() < m_new) {
    throw ShortfallError("model reply yielded " + std::to_string(out.size()) + " of " +
                             std::to_string(m_new) + " unique hypotheses",
                         std::move(out));
  }
  return out;
}

std::vector<Hypothesis> generate_replacements(const GenerationRequest& request, LlmClient& client,
                                              int retries, const EventSink& events) {
  if (retries < 0) throw ValidationError("retries must be >= 0");
  const std::string prompt = render_prompt(request);
  const GenerationMode origin =
      request.prior_set.empty() ? GenerationMode::seed : request.mode;

  std::vector<std::string> exclude;
  for (const auto& h : request.prior_set.members()) exclude.push_back(h.question());
  std::vector<Hypothesis> collected;

  const auto emit = [&](const char* what, int call, const std::string& detail) {
    if (!events) return;
    events({{"event", what},
            {"t", request.iteration},
            {"attempt", request.attempt},
            {"call", call},
            {"detail", detail}});
  };

  for (int call = 0; call <= retries; ++call) {
    ChatRequest chat;
    chat.prompt = prompt;
    chat.generation = &request;
    chat.nonce = (static_cast<std::uint64_t>(request.iteration) << 32) |
                 (static_cast<std::uint64_t>(request.attempt) << 16) |
                 static_cast<std::uint64_t>(call);
    std::string reply;
    try {
      reply = client.complete(chat);
    } catch (const EndpointError& e) {
      emit("generation_endpoint_error", call, e.what());
      continue;
    }
    std::vector<Hypothesis> got;
    const std::size_t need = request.m_new - collected.size();
    try {
      got = parse_generation(reply, need, exclude, origin, request.iteration);
    } catch (const ShortfallError& e) {
      got = e.survivors();
      emit("generation_shortfall", call, e.what());
    } catch (const ParseError& e) {
      emit("generation_parse_error", call, e.what());
      continue;
    }
    for (auto& h : got) {
      exclude.push_back(h.question());
      collected.push_back(std::move(h));
    }
    if (collected.size() >= request.m_new) return collected;
  }
  throw GenerationError("hypothesis generation failed: " + std::to_string(collected.size()) +
                            " of " + std::to_string(request.m_new) + " hypotheses after " +
                            std::to_string(retries + 1) + " calls",
                        std::move(collected));
}

}  // namespace hypoloop
