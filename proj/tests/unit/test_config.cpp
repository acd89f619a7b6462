#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "mixhaz/mixhaz.hpp"

using namespace mixhaz;
using Catch::Approx;

static Config parse(const std::string& text) {
	std::istringstream in(text);
	return Config::parse(in);
}

TEST_CASE("config parses sections, scalars, and lists") {
	const auto cfg = parse(
	    "# top comment\n"
	    "[simlab]\n"
	    "n = 3000\n"
	    "shares = 0.5, 0.5\n"
	    "source = dgp   ; trailing comment\n"
	    "\n"
	    "[estimator]\n"
	    "two_step = true\n"
	    "tail = nonparametric\n"
	    "trim = -0.25\n");
	CHECK(cfg.get_int("simlab", "n") == 3000);
	CHECK(cfg.get_string("simlab", "source") == "dgp");
	CHECK(cfg.get_double_list("simlab", "shares") == std::vector<double>{0.5, 0.5});
	CHECK(cfg.get_bool("estimator", "two_step"));
	CHECK(cfg.get_double("estimator", "trim") == Approx(-0.25));
	CHECK(cfg.has("estimator", "tail"));
	CHECK_FALSE(cfg.has("estimator", "nope"));
}

TEST_CASE("config fallbacks apply only when the key is absent") {
	const auto cfg = parse("[a]\nx = 2\n");
	CHECK(cfg.get_int("a", "x", 7) == 2);
	CHECK(cfg.get_int("a", "y", 7) == 7);
	CHECK(cfg.get_string("b", "z", "dflt") == "dflt");
	CHECK(cfg.get_double_list("a", "l", {1.0, 2.0}) == std::vector<double>{1.0, 2.0});
	CHECK(cfg.get_string_list("a", "s", {"p", "q"}) == std::vector<std::string>{"p", "q"});
}

TEST_CASE("config rejects malformed input with line numbers") {
	CHECK_THROWS_WITH(parse("[a]\nx = 1\nx = 2\n"),
	                  Catch::Matchers::ContainsSubstring("line 3"));
	CHECK_THROWS(parse("[a]\nnot a pair\n"));
	CHECK_THROWS(parse("[broken\nx = 1\n"));
	// keys before any section header live in the unnamed section
	CHECK(parse("x = 1\n").get_int("", "x") == 1);
	CHECK_THROWS(Config::parse_file("/nonexistent/path.ini"));
}

TEST_CASE("config type errors identify the key") {
	const auto cfg = parse("[a]\nx = abc\nb = maybe\n");
	CHECK_THROWS_WITH(cfg.get_double("a", "x"), Catch::Matchers::ContainsSubstring("x"));
	CHECK_THROWS_WITH(cfg.get_int("a", "x"), Catch::Matchers::ContainsSubstring("x"));
	CHECK_THROWS_WITH(cfg.get_bool("a", "b"), Catch::Matchers::ContainsSubstring("b"));
	CHECK_THROWS_WITH(cfg.get_string("a", "missing"),
	                  Catch::Matchers::ContainsSubstring("missing"));
}

TEST_CASE("boolean spellings") {
	const auto cfg = parse("[a]\nt1 = true\nt2 = yes\nt3 = 1\nf1 = false\nf2 = no\nf3 = 0\n");
	for (const char* k : {"t1", "t2", "t3"}) CHECK(cfg.get_bool("a", k));
	for (const char* k : {"f1", "f2", "f3"}) CHECK_FALSE(cfg.get_bool("a", k));
}
