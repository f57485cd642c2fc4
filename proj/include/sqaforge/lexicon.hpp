#pragma once

// Directional phrase lexicon. Phrases come in families of four (one per
// quadrant) so that rewriting a phrase keeps its wording style and repeated
// rotations cycle back to the original text.

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sqaforge/error.hpp"
#include "sqaforge/geometry.hpp"
#include "sqaforge/records.hpp"

namespace sqaforge {

struct LexiconEntry {
  Quadrant quadrant = Quadrant::Front;
  std::size_t family = 0;
  /// Anchor phrases ("facing") name the object in front of the observer.
  /// They are re-grounded against the scene instead of permuted.
  bool anchor = false;
};

struct PhraseMatch {
  std::size_t pos = 0;
  std::size_t len = 0;
  std::string phrase;  // lexicon key (lowercase)
  LexiconEntry entry;
};

namespace text {

inline bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '\'';
}

inline bool boundary_before(std::string_view s, std::size_t pos) {
  return pos == 0 || !is_word_char(s[pos - 1]);
}

inline bool boundary_after(std::string_view s, std::size_t end) {
  return end >= s.size() || !is_word_char(s[end]);
}

inline bool iequals_at(std::string_view s, std::size_t pos, std::string_view lower) {
  if (pos + lower.size() > s.size()) return false;
  for (std::size_t i = 0; i < lower.size(); ++i)
    if (std::tolower(static_cast<unsigned char>(s[pos + i])) != lower[i]) return false;
  return true;
}

/// Whole-word, case-insensitive search for `lower` starting at `from`.
inline std::optional<std::size_t> find_word(std::string_view s, std::string_view lower,
                                            std::size_t from = 0) {
  if (lower.empty()) return std::nullopt;
  for (std::size_t i = from; i + lower.size() <= s.size(); ++i)
    if (boundary_before(s, i) && iequals_at(s, i, lower) &&
        boundary_after(s, i + lower.size()))
      return i;
  return std::nullopt;
}

inline std::string capitalize_like(std::string replacement, std::string_view original) {
  if (!original.empty() && !replacement.empty() &&
      std::isupper(static_cast<unsigned char>(original.front())))
    replacement.front() = static_cast<char>(std::toupper(static_cast<unsigned char>(replacement.front())));
  return replacement;
}

}  // namespace text

class DirectionalLexicon {
 public:
  using Family = std::array<std::string, 4>;  // indexed by Quadrant

  /// Adds a family of four phrases ordered Front, Right, Back, Left. The
  /// first family added supplies the canonical phrase for each quadrant.
  void add_family(const Family& phrases) {
    const std::size_t id = families_.size();
    families_.push_back({});
    for (auto q : kQuadrants) {
      auto key = to_lower(phrases[static_cast<std::size_t>(q)]);
      insert(key, LexiconEntry{q, id, false});
      families_.back()[static_cast<std::size_t>(q)] = key;
    }
  }

  /// A phrase outside any family; rewrites land in the canonical family.
  void add_phrase(std::string_view phrase, Quadrant q) {
    if (families_.empty())
      throw Error(ErrorCode::InvalidArgument, "add a phrase family before loose phrases");
    insert(to_lower(phrase), LexiconEntry{q, 0, false});
  }

  void add_anchor(std::string_view phrase) {
    insert(to_lower(phrase), LexiconEntry{Quadrant::Front, 0, true});
  }

  std::optional<LexiconEntry> lookup(std::string_view phrase) const {
    auto it = term_map_.find(to_lower(phrase));
    if (it == term_map_.end()) return std::nullopt;
    return it->second;
  }

  const std::string& inverse(Quadrant q) const {
    return phrase_for(0, q);
  }

  const std::string& phrase_for(std::size_t family, Quadrant q) const {
    if (family >= families_.size())
      throw Error(ErrorCode::InvalidArgument, "lexicon has no phrase family " + std::to_string(family));
    return families_[family][static_cast<std::size_t>(q)];
  }

  const std::map<std::string, LexiconEntry>& term_map() const { return term_map_; }
  std::size_t family_count() const { return families_.size(); }

  /// Non-overlapping phrase occurrences, left to right, longest phrase
  /// first at each position.
  std::vector<PhraseMatch> find_all(std::string_view s) const {
    std::vector<PhraseMatch> out;
    std::size_t i = 0;
    while (i < s.size()) {
      bool hit = false;
      if (text::boundary_before(s, i)) {
        for (const auto& key : by_length_) {
          if (text::iequals_at(s, i, key) && text::boundary_after(s, i + key.size())) {
            out.push_back(PhraseMatch{i, key.size(), key, term_map_.at(key)});
            i += key.size();
            hit = true;
            break;
          }
        }
      }
      if (!hit) ++i;
    }
    return out;
  }

  /// Directional-looking words that no lexicon phrase covers.
  std::vector<std::string> uncovered_phrases(std::string_view s) const {
    static const std::array<std::string_view, 7> cues = {
        "left", "right", "behind", "front", "ahead", "o'clock", "oclock"};
    const auto matches = find_all(s);
    auto covered = [&](std::size_t pos) {
      for (const auto& m : matches)
        if (pos >= m.pos && pos < m.pos + m.len) return true;
      return false;
    };
    std::vector<std::string> out;
    for (auto cue : cues) {
      std::size_t from = 0;
      while (auto pos = text::find_word(s, cue, from)) {
        if (!covered(*pos)) out.push_back(context_around(s, *pos, cue.size()));
        from = *pos + cue.size();
      }
    }
    return out;
  }

  static DirectionalLexicon standard() {
    DirectionalLexicon lex;
    lex.add_family({"in front of me", "on my right", "behind me", "on my left"});
    lex.add_family({"ahead of me", "to my right", "at my back", "to my left"});
    lex.add_family({"straight ahead", "on my right-hand side", "directly behind me",
                    "on my left-hand side"});
    lex.add_family({"in front of you", "on your right", "behind you", "on your left"});
    lex.add_family({"ahead of you", "to your right", "at your back", "to your left"});
    lex.add_anchor("facing");
    lex.add_anchor("looking at");
    return lex;
  }

  /// {"families": [{"front":..,"right":..,"back":..,"left":..}],
  ///  "phrases": {"phrase": "quadrant"}, "anchors": ["facing"]}
  static DirectionalLexicon from_json(const nlohmann::json& j) {
    DirectionalLexicon lex;
    if (!j.contains("families") || !j.at("families").is_array() || j.at("families").empty())
      throw Error(ErrorCode::ParseError, "lexicon needs a non-empty 'families' array");
    for (const auto& fam : j.at("families")) {
      Family f;
      for (auto q : kQuadrants) {
        const auto key = std::string(to_string(q));
        if (!fam.contains(key))
          throw Error(ErrorCode::ParseError, "lexicon family lacks '" + key + "'");
        f[static_cast<std::size_t>(q)] = fam.at(key).get<std::string>();
      }
      lex.add_family(f);
    }
    if (j.contains("phrases")) {
      for (const auto& [phrase, quad] : j.at("phrases").items()) {
        auto q = parse_quadrant(quad.get<std::string>());
        if (!q) throw Error(ErrorCode::ParseError, "unknown quadrant for phrase '" + phrase + "'");
        lex.add_phrase(phrase, *q);
      }
    }
    if (j.contains("anchors"))
      for (const auto& a : j.at("anchors")) lex.add_anchor(a.get<std::string>());
    return lex;
  }

  nlohmann::json to_json() const {
    nlohmann::json fams = nlohmann::json::array();
    for (const auto& f : families_) {
      nlohmann::json o;
      for (auto q : kQuadrants) o[std::string(to_string(q))] = f[static_cast<std::size_t>(q)];
      fams.push_back(o);
    }
    nlohmann::json phrases = nlohmann::json::object();
    nlohmann::json anchors = nlohmann::json::array();
    for (const auto& [k, e] : term_map_) {
      if (e.anchor) {
        anchors.push_back(k);
      } else if (families_[e.family][static_cast<std::size_t>(e.quadrant)] != k) {
        phrases[k] = std::string(to_string(e.quadrant));
      }
    }
    return {{"families", fams}, {"phrases", phrases}, {"anchors", anchors}};
  }

 private:
  void insert(const std::string& key, LexiconEntry entry) {
    if (key.empty()) throw Error(ErrorCode::InvalidArgument, "empty lexicon phrase");
    if (!term_map_.emplace(key, entry).second)
      throw Error(ErrorCode::InvariantViolation, "phrase '" + key + "' listed twice in lexicon");
    by_length_.insert(
        std::upper_bound(by_length_.begin(), by_length_.end(), key,
                         [](const std::string& a, const std::string& b) { return a.size() > b.size(); }),
        key);
  }

  /// The cue word plus up to two preceding words, for error reports.
  static std::string context_around(std::string_view s, std::size_t pos, std::size_t len) {
    std::size_t b = pos;
    int spaces = 0;
    while (b > 0) {
      if (s[b - 1] == ' ' && ++spaces == 3) break;
      --b;
    }
    std::size_t e = std::min(s.size(), pos + len);
    while (e < s.size() && text::is_word_char(s[e])) ++e;
    std::string out(s.substr(b, e - b));
    while (!out.empty() && out.front() == ' ') out.erase(out.begin());
    return out;
  }

  std::map<std::string, LexiconEntry> term_map_;
  std::vector<std::string> by_length_;  // longest first
  std::vector<Family> families_;
};

}  // namespace sqaforge
