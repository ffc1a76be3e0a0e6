#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "huequery/segmentation.hpp"

namespace hq {

/// Query tree: leaves pair a garment region with a colour label; inner nodes
/// are n-ary and/or with at least two children.
struct QueryAst {
  enum class Kind { leaf, all_of, any_of };

  Kind kind = Kind::leaf;
  Garment garment = Garment::upper;
  std::string color_label;
  std::vector<QueryAst> children;

  static QueryAst leaf(Garment g, std::string label);
  static QueryAst all_of(std::vector<QueryAst> children);
  static QueryAst any_of(std::vector<QueryAst> children);

  bool is_leaf() const { return kind == Kind::leaf; }
  friend bool operator==(const QueryAst&, const QueryAst&) = default;
};

/// Leaves in left-to-right order.
std::vector<const QueryAst*> leaves(const QueryAst& ast);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::vector<std::string> tokens)
      : std::runtime_error(message), tokens_(std::move(tokens)) {}
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
};

struct Lexicon {
  std::map<std::string, Garment> garment_nouns;
  std::set<std::string> stop_words;
};

const Lexicon& default_lexicon();

/// Reads `upper.txt`, `lower.txt` and `stopwords.txt` (one token per line,
/// '#' comments) from `dir`. Missing files fall back to the defaults.
Lexicon load_lexicon(const std::filesystem::path& dir);

/// Writes the three lexicon files into `dir`.
void save_lexicon(const Lexicon& lexicon, const std::filesystem::path& dir);

/// query  := clause (("and" | "or") clause)*
/// clause := adjective+ garment-noun
/// "and" binds tighter than "or". Tokens that are neither stop words,
/// connectives nor garment nouns are adjectives and join into the label.
QueryAst parse_query(std::string_view text, const Lexicon& lexicon = default_lexicon());

/// Canonical text that parses back to the same tree. Throws
/// std::invalid_argument for an "and" node with an "or" child, which the
/// precedence rules cannot express.
std::string to_text(const QueryAst& ast);

/// Compact debugging form, e.g. And(Leaf(upper,"blue"), Leaf(lower,"black")).
std::string to_debug_string(const QueryAst& ast);

}  // namespace hq
