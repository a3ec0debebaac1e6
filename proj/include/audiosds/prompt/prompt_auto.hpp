#pragma once

#include <algorithm>
#include <cctype>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "audiosds/clients/text_client.hpp"
#include "audiosds/error.hpp"
#include "audiosds/prompt/template.hpp"

// Automatic prompt sets for separation: caption the mixture, ask an LLM to
// split the caption into K per-channel prompts, optionally re-caption the
// separated sources to decide whether to keep, re-prompt or subdivide.

namespace audiosds {

struct DecompositionProposal {
  std::size_t k = 0;
  std::vector<std::string> prompts;
  std::string caption;
  int example = 0;  // "Example n" block it came from, 0 if unnumbered

  void validate() const {
    if (k < 2) throw ValidationError("a decomposition needs at least two prompts");
    if (prompts.size() != k) throw ValidationError("proposal lists " + std::to_string(prompts.size()) +
                                                   " prompts for N=" + std::to_string(k));
    std::set<std::string> seen;
    for (const auto& p : prompts) {
      if (p.empty()) throw ValidationError("proposal has an empty prompt");
      if (!seen.insert(p).second) throw ValidationError("proposal repeats the prompt \"" + p + "\"");
    }
  }
};

struct RejectedProposal {
  int example = 0;
  std::size_t k = 0;
  std::string reason;
};

struct Suggestions {
  std::vector<DecompositionProposal> proposals;
  std::vector<RejectedProposal> rejected;
  std::string raw_response;

  std::vector<const DecompositionProposal*> with_k(std::size_t k) const {
    std::vector<const DecompositionProposal*> out;
    for (const auto& p : proposals)
      if (p.k == k) out.push_back(&p);
    return out;
  }
};

inline std::string caption(const Waveform& audio, TextClient& client) {
  auto text = client.post(audio_request("caption", audio).dump());
  const auto b = text.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) throw ProtocolError(client.name() + " returned an empty caption");
  text = text.substr(b, text.find_last_not_of(" \t\r\n") - b + 1);
  return text;
}

namespace detail {

inline std::string strip_quotes(std::string s) {
  auto trim = [](std::string& t) {
    const auto b = t.find_first_not_of(" \t\r");
    t = b == std::string::npos ? "" : t.substr(b, t.find_last_not_of(" \t\r") - b + 1);
  };
  trim(s);
  static const std::vector<std::string> quotes = {"\xE2\x80\x9C", "\xE2\x80\x9D", "\"", "'", "\xE2\x80\x98",
                                                  "\xE2\x80\x99"};
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& q : quotes) {
      if (s.size() >= q.size() && s.compare(0, q.size(), q) == 0) {
        s.erase(0, q.size());
        changed = true;
      }
      if (s.size() >= q.size() && s.compare(s.size() - q.size(), q.size(), q) == 0) {
        s.erase(s.size() - q.size());
        changed = true;
      }
    }
    trim(s);
  }
  return s;
}

}  // namespace detail

/// Line-oriented extraction of "Example n (N=k)" blocks and their
/// "Channel i Prompt: ..." lines. Blocks that break the proposal invariants
/// land in `rejected` with the reason.
inline Suggestions parse_decompositions(const std::string& raw, const std::string& caption_text = "") {
  static const std::regex header(R"(^\s*Example\s+(\d+)\s*\(\s*N\s*=\s*(\d+)\s*\))", std::regex::icase);
  static const std::regex channel(R"(^\s*Channel\s+(\d+)\s+Prompt\s*:\s*(.*)$)", std::regex::icase);
  struct Block {
    int example = 0;
    std::optional<std::size_t> n;
    std::vector<std::pair<int, std::string>> lines;
  };
  std::vector<Block> blocks;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    auto eol = raw.find('\n', pos);
    if (eol == std::string::npos) eol = raw.size();
    const std::string line = raw.substr(pos, eol - pos);
    pos = eol + 1;
    std::smatch m;
    if (std::regex_search(line, m, header)) {
      blocks.push_back({std::stoi(m[1]), static_cast<std::size_t>(std::stoul(m[2])), {}});
    } else if (std::regex_search(line, m, channel)) {
      if (blocks.empty()) blocks.push_back({});
      blocks.back().lines.emplace_back(std::stoi(m[1]), detail::strip_quotes(m[2]));
    }
  }

  Suggestions out;
  out.raw_response = raw;
  for (const auto& b : blocks) {
    if (b.lines.empty()) continue;
    DecompositionProposal p;
    p.k = b.n.value_or(b.lines.size());
    p.caption = caption_text;
    p.example = b.example;
    try {
      for (std::size_t i = 0; i < b.lines.size(); ++i)
        if (b.lines[i].first != static_cast<int>(i + 1))
          throw ValidationError("channel numbers are not 1.." + std::to_string(b.lines.size()));
      for (const auto& [idx, text] : b.lines) p.prompts.push_back(text);
      p.validate();
      out.proposals.push_back(std::move(p));
    } catch (const ValidationError& e) {
      out.rejected.push_back({b.example, p.k, e.what()});
    }
  }
  return out;
}

/// Sends the filled template to the LLM and keeps proposals whose K was
/// requested. Every requested K needs at least one valid proposal.
inline Suggestions suggest_decompositions(const std::string& caption_text, const std::vector<std::size_t>& k_values,
                                          TextClient& llm) {
  if (k_values.empty()) throw InvalidInput("no K values requested");
  const auto raw = llm.post(render_decomposition_template(caption_text));
  auto all = parse_decompositions(raw, caption_text);
  Suggestions out;
  out.raw_response = raw;
  out.rejected = all.rejected;
  for (auto& p : all.proposals)
    if (std::find(k_values.begin(), k_values.end(), p.k) != k_values.end()) out.proposals.push_back(std::move(p));
  for (auto k : k_values)
    if (out.with_k(k).empty()) throw ParseError("LLM response has no valid N=" + std::to_string(k) + " block", raw);
  return out;
}

// ---- optional branching ----

struct RefineConfig {
  double agreement_threshold = 0.5;  // fraction of prompt keywords found in the re-caption
};

enum class RefineAction { keep, reprompt, subdivide };

inline std::string to_string(RefineAction a) {
  switch (a) {
    case RefineAction::keep: return "keep";
    case RefineAction::reprompt: return "reprompt";
    case RefineAction::subdivide: return "subdivide";
  }
  return "?";
}

struct RefineDecision {
  RefineAction action = RefineAction::keep;
  std::optional<std::size_t> source;  // for subdivide
  std::vector<std::string> captions;
  std::vector<double> agreement;
  std::vector<std::string> new_prompts;  // for reprompt
  bool warning = false;
  std::string note;

  nlohmann::json to_json() const {
    nlohmann::json j{{"action", to_string(action)},
                     {"captions", captions},
                     {"agreement", agreement},
                     {"new_prompts", new_prompts},
                     {"warning", warning},
                     {"note", note}};
    j["source"] = source ? nlohmann::json(*source) : nlohmann::json(nullptr);
    return j;
  }
};

namespace detail {

inline const std::set<std::string>& stopwords() {
  static const std::set<std::string> s = {"a",   "an",   "the",  "is",   "are", "of",   "on",   "in",   "and",
                                          "or",  "with", "to",   "by",   "at",  "some", "someone", "something",
                                          "it",  "its",  "very", "while", "from", "for", "as",  "be",   "being",
                                          "there", "this", "that", "person", "people", "sound", "sounds", "audio"};
  return s;
}

// Lowercase content words with a crude suffix stem so "clicks" and
// "clicking" match "click".
inline std::vector<std::string> keywords(const std::string& text) {
  std::vector<std::string> out;
  std::string w;
  auto flush = [&] {
    if (w.empty()) return;
    for (const char* suf : {"ing", "ed", "es", "s"}) {
      const std::string s(suf);
      if (w.size() > s.size() + 3 && w.compare(w.size() - s.size(), s.size(), s) == 0) {
        w.erase(w.size() - s.size());
        break;
      }
    }
    if (!stopwords().count(w)) out.push_back(w);
    w.clear();
  };
  for (unsigned char c : text) {
    if (std::isalpha(c))
      w += static_cast<char>(std::tolower(c));
    else
      flush();
  }
  flush();
  return out;
}

// Clauses joined by "and", "while", "with", commas or semicolons that carry
// at least one content word.
inline std::size_t event_count(const std::string& text) {
  static const std::regex sep(R"(\s+(?:and|while|with|as)\s+|[,;])", std::regex::icase);
  std::size_t n = 0;
  for (std::sregex_token_iterator it(text.begin(), text.end(), sep, -1), end; it != end; ++it)
    if (!keywords(it->str()).empty()) ++n;
  return n;
}

inline double keyword_agreement(const std::string& prompt, const std::string& caption_text) {
  const auto pk = keywords(prompt);
  if (pk.empty()) return 1.0;
  const auto ck = keywords(caption_text);
  const std::set<std::string> cs(ck.begin(), ck.end());
  std::size_t hit = 0;
  for (const auto& w : pk) hit += cs.count(w);
  return static_cast<double>(hit) / static_cast<double>(pk.size());
}

}  // namespace detail

/// Re-captions each separated source. A caption naming more events than its
/// prompt asks for subdividing that source; otherwise low keyword agreement
/// on any source asks the LLM for a new prompt set; else keep. Client
/// failures fail open (keep, with a warning).
inline RefineDecision branch_refine(const std::vector<Waveform>& sources, const std::vector<std::string>& prompts,
                                    TextClient& captioner, TextClient& llm, const RefineConfig& cfg = {}) {
  if (sources.size() != prompts.size()) throw InvalidInput("one prompt per source expected");
  RefineDecision d;
  try {
    for (const auto& s : sources) d.captions.push_back(caption(s, captioner));
  } catch (const Error& e) {
    d.warning = true;
    d.note = std::string("captioning failed: ") + e.what();
    return d;
  }
  for (std::size_t i = 0; i < sources.size(); ++i) {
    d.agreement.push_back(detail::keyword_agreement(prompts[i], d.captions[i]));
    const auto ce = detail::event_count(d.captions[i]);
    if (!d.source && ce >= 2 && ce > detail::event_count(prompts[i])) d.source = i;
  }
  if (d.source) {
    d.action = RefineAction::subdivide;
    d.note = "source " + std::to_string(*d.source + 1) + " re-captions as several events";
    return d;
  }
  if (std::all_of(d.agreement.begin(), d.agreement.end(), [&](double a) { return a >= cfg.agreement_threshold; })) {
    d.note = "re-captions agree with their prompts";
    return d;
  }
  std::string joined;
  for (const auto& c : d.captions) joined += (joined.empty() ? "" : " ") + c;
  try {
    const auto sug = suggest_decompositions(joined, {sources.size()}, llm);
    d.action = RefineAction::reprompt;
    d.new_prompts = sug.with_k(sources.size()).front()->prompts;
    d.note = "low prompt agreement; new prompt set proposed";
  } catch (const Error& e) {
    d.warning = true;
    d.note = std::string("re-prompting failed: ") + e.what();
  }
  return d;
}

}  // namespace audiosds
