#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "golden_queries.hpp"
#include "huequery/query.hpp"

using namespace hq;

TEST_CASE("golden phrasings parse to their documented trees") {
  for (const auto& c : golden::kQueries) {
    CAPTURE(c.text);
    const auto ast = parse_query(c.text);
    CHECK(to_debug_string(ast) == c.tree);
    CHECK(parse_query(c.text) == ast);
  }
}

TEST_CASE("canonical text round-trips") {
  for (const auto& c : golden::kQueries) {
    CAPTURE(c.text);
    const auto ast = parse_query(c.text);
    CHECK(parse_query(to_text(ast)) == ast);
  }
  const auto built = QueryAst::any_of({QueryAst::all_of({QueryAst::leaf(Garment::upper, "light"),
                                                          QueryAst::leaf(Garment::lower, "pale beige")}),
                                       QueryAst::leaf(Garment::lower, "dark")});
  CHECK(parse_query(to_text(built)) == built);
  const auto inexpressible = QueryAst::all_of({QueryAst::any_of({QueryAst::leaf(Garment::upper, "a"),
                                                                 QueryAst::leaf(Garment::upper, "b")}),
                                               QueryAst::leaf(Garment::lower, "c")});
  CHECK_THROWS_AS(to_text(inexpressible), std::invalid_argument);
}

TEST_CASE("leaves come out left to right") {
  const auto ast = parse_query("red top and blue shorts or black coat");
  const auto ls = leaves(ast);
  REQUIRE(ls.size() == 3);
  CHECK(ls[0]->color_label == "red");
  CHECK(ls[1]->garment == Garment::lower);
  CHECK(ls[2]->color_label == "black");
}

TEST_CASE("unknown adjectives are accepted") {
  CHECK(to_debug_string(parse_query("chartreuse shirt")) == R"(Leaf(upper,"chartreuse"))");
  CHECK(to_debug_string(parse_query("very pale mint-green jacket")) ==
        R"(Leaf(upper,"very pale mint-green"))");
}

TEST_CASE("parse errors") {
  SUBCASE("no garment noun names the stray tokens") {
    try {
      parse_query("blue hat");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.tokens() == std::vector<std::string>{"blue", "hat"});
      CHECK(std::string(e.what()).find("blue hat") != std::string::npos);
    }
  }
  SUBCASE("empty colour label") {
    CHECK_THROWS_AS(parse_query("a jacket"), ParseError);
    CHECK_THROWS_AS(parse_query("red shirt and trousers"), ParseError);
  }
  SUBCASE("malformed connectives") {
    CHECK_THROWS_AS(parse_query(""), ParseError);
    CHECK_THROWS_AS(parse_query("find a person"), ParseError);
    CHECK_THROWS_AS(parse_query("and red shirt"), ParseError);
    CHECK_THROWS_AS(parse_query("red shirt and"), ParseError);
    CHECK_THROWS_AS(parse_query("red shirt or or blue pants"), ParseError);
    CHECK_THROWS_AS(parse_query("red shirt blue pants"), ParseError);
    CHECK_THROWS_AS(parse_query("red and shirt"), ParseError);
  }
}

TEST_CASE("lexicon files") {
  const auto dir = std::filesystem::temp_directory_path() / "hq_lexicon_test";
  std::filesystem::remove_all(dir);
  save_lexicon(default_lexicon(), dir);
  const auto loaded = load_lexicon(dir);
  CHECK(loaded.garment_nouns == default_lexicon().garment_nouns);
  CHECK(loaded.stop_words == default_lexicon().stop_words);

  {
    std::ofstream(dir / "upper.txt") << "# tops\nhoodie\n\ncardigan\n";
  }
  const auto custom = load_lexicon(dir);
  CHECK(to_debug_string(parse_query("grey hoodie", custom)) == R"(Leaf(upper,"grey"))");
  CHECK_THROWS_AS(parse_query("grey jacket", custom), ParseError);
  CHECK(to_debug_string(parse_query("grey jeans", custom)) == R"(Leaf(lower,"grey"))");
  std::filesystem::remove_all(dir);
}

TEST_CASE("shipped lexicon files match the built-in lexicon") {
  const auto lex = load_lexicon(HQ_SOURCE_DIR "/config/lexicon");
  CHECK(lex.garment_nouns == default_lexicon().garment_nouns);
  CHECK(lex.stop_words == default_lexicon().stop_words);
}
