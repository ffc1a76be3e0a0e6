#include "huequery/query.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace hq {

QueryAst QueryAst::leaf(Garment g, std::string label) {
  QueryAst a;
  a.kind = Kind::leaf;
  a.garment = g;
  a.color_label = std::move(label);
  return a;
}

QueryAst QueryAst::all_of(std::vector<QueryAst> children) {
  QueryAst a;
  a.kind = Kind::all_of;
  a.children = std::move(children);
  return a;
}

QueryAst QueryAst::any_of(std::vector<QueryAst> children) {
  QueryAst a;
  a.kind = Kind::any_of;
  a.children = std::move(children);
  return a;
}

namespace {

void collect(const QueryAst& ast, std::vector<const QueryAst*>& out) {
  if (ast.is_leaf()) {
    out.push_back(&ast);
    return;
  }
  for (const auto& c : ast.children) collect(c, out);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (unsigned char ch : text) {
    // Letters, digits, hyphens and apostrophes stay inside a word; bytes of
    // multi-byte UTF-8 sequences are kept as-is.
    if (std::isalnum(ch) || ch == '-' || ch == '\'' || ch >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::vector<std::string> read_tokens(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot read lexicon file " + file.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    for (auto& t : tokenize(line)) out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

std::vector<const QueryAst*> leaves(const QueryAst& ast) {
  std::vector<const QueryAst*> out;
  collect(ast, out);
  return out;
}

const Lexicon& default_lexicon() {
  static const Lexicon lex = [] {
    Lexicon l;
    for (const char* w : {"jacket", "shirt", "jersey", "top", "sweater", "coat", "blouse", "torso",
                          "upper"}) {
      l.garment_nouns.emplace(w, Garment::upper);
    }
    for (const char* w : {"trousers", "pants", "jeans", "skirt", "shorts", "legs", "lower"}) {
      l.garment_nouns.emplace(w, Garment::lower);
    }
    for (const char* w :
         {"a",       "an",     "the",     "search",  "find",       "show",   "me",     "look",
          "looking", "for",    "person",  "people",  "pedestrian", "man",    "woman",  "men",
          "women",   "someone", "somebody", "individual", "wearing", "wears", "wear",   "with",
          "who",     "is",     "in",      "dressed", "has",        "having", "retrieve", "all",
          "of",      "garment", "garments", "clothing", "clothes", "get",  "please", "i",
          "want",    "need",   "that",    "his",     "her",        "their",  "on",     "-"}) {
      l.stop_words.insert(w);
    }
    return l;
  }();
  return lex;
}

Lexicon load_lexicon(const std::filesystem::path& dir) {
  Lexicon lex = default_lexicon();
  const auto upper = dir / "upper.txt";
  const auto lower = dir / "lower.txt";
  const auto stop = dir / "stopwords.txt";
  if (std::filesystem::exists(upper) || std::filesystem::exists(lower)) {
    lex.garment_nouns.clear();
    if (std::filesystem::exists(upper)) {
      for (auto& t : read_tokens(upper)) lex.garment_nouns[t] = Garment::upper;
    }
    if (std::filesystem::exists(lower)) {
      for (auto& t : read_tokens(lower)) lex.garment_nouns[t] = Garment::lower;
    }
  }
  if (std::filesystem::exists(stop)) {
    auto tokens = read_tokens(stop);
    lex.stop_words = {tokens.begin(), tokens.end()};
  }
  return lex;
}

void save_lexicon(const Lexicon& lexicon, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream upper(dir / "upper.txt"), lower(dir / "lower.txt"), stop(dir / "stopwords.txt");
  for (const auto& [word, g] : lexicon.garment_nouns) {
    (g == Garment::upper ? upper : lower) << word << '\n';
  }
  for (const auto& w : lexicon.stop_words) stop << w << '\n';
}

QueryAst parse_query(std::string_view text, const Lexicon& lexicon) {
  // Flat list of clauses and the connective that precedes each one.
  std::vector<QueryAst> clauses;
  std::vector<bool> joined_by_and;  // joined_by_and[i] links clause i and i+1
  std::vector<std::string> adjectives;
  bool expecting_clause = true;

  for (auto& tok : tokenize(text)) {
    if (tok == "and" || tok == "or") {
      if (!adjectives.empty()) {
        throw ParseError("no garment noun after '" + join(adjectives) + "'", adjectives);
      }
      if (clauses.empty() || expecting_clause) {
        throw ParseError("connective '" + tok + "' without a preceding clause", {tok});
      }
      joined_by_and.push_back(tok == "and");
      expecting_clause = true;
      continue;
    }
    if (lexicon.stop_words.contains(tok)) continue;
    if (auto it = lexicon.garment_nouns.find(tok); it != lexicon.garment_nouns.end()) {
      if (adjectives.empty()) {
        throw ParseError("garment '" + tok + "' has no colour label", {tok});
      }
      if (!expecting_clause) {
        throw ParseError("missing connective before '" + join(adjectives) + " " + tok + "'",
                         adjectives);
      }
      clauses.push_back(QueryAst::leaf(it->second, join(adjectives)));
      adjectives.clear();
      expecting_clause = false;
      continue;
    }
    adjectives.push_back(std::move(tok));
  }

  if (!adjectives.empty()) {
    throw ParseError("no garment noun found; unrecognized tokens: " + join(adjectives), adjectives);
  }
  if (clauses.empty()) {
    throw ParseError("no garment noun found", {});
  }
  if (expecting_clause) {
    throw ParseError("query ends with a dangling connective", {});
  }

  // Group runs joined by "and", then "or" the groups.
  std::vector<QueryAst> groups;
  std::vector<QueryAst> run{std::move(clauses[0])};
  auto close_run = [&] {
    groups.push_back(run.size() == 1 ? std::move(run[0]) : QueryAst::all_of(std::move(run)));
    run.clear();
  };
  for (std::size_t i = 1; i < clauses.size(); ++i) {
    if (!joined_by_and[i - 1]) close_run();
    run.push_back(std::move(clauses[i]));
  }
  close_run();
  return groups.size() == 1 ? std::move(groups[0]) : QueryAst::any_of(std::move(groups));
}

std::string to_text(const QueryAst& ast) {
  switch (ast.kind) {
    case QueryAst::Kind::leaf:
      return ast.color_label + " " + to_string(ast.garment);
    case QueryAst::Kind::all_of: {
      std::string out;
      for (const auto& c : ast.children) {
        if (c.kind == QueryAst::Kind::any_of) {
          throw std::invalid_argument("to_text: 'and' over 'or' has no unparenthesised form");
        }
        if (!out.empty()) out += " and ";
        out += to_text(c);
      }
      return out;
    }
    case QueryAst::Kind::any_of: {
      std::string out;
      for (const auto& c : ast.children) {
        if (!out.empty()) out += " or ";
        out += to_text(c);
      }
      return out;
    }
  }
  return {};
}

std::string to_debug_string(const QueryAst& ast) {
  if (ast.is_leaf()) {
    return "Leaf(" + to_string(ast.garment) + ",\"" + ast.color_label + "\")";
  }
  std::string out = ast.kind == QueryAst::Kind::all_of ? "And(" : "Or(";
  for (std::size_t i = 0; i < ast.children.size(); ++i) {
    if (i) out += ", ";
    out += to_debug_string(ast.children[i]);
  }
  return out + ")";
}

}  // namespace hq
