#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "mixhaz/mixhaz.hpp"

using namespace mixhaz;
using Catch::Approx;

TEST_CASE("panel csv round-trips") {
	Panel panel;
	panel.notice_labels = {"short", "long"};
	panel.covariate_names = {"age", "educ"};
	panel.rows = {{0, 0, 3, false, {41.25, 2}}, {1, 1, 5, true, {38.5, 1}}};

	std::ostringstream out;
	write_panel_csv(out, panel);
	std::istringstream in(out.str());
	const auto back = read_panel_csv(in, {"short", "long"});

	REQUIRE(back.rows.size() == 2);
	CHECK(back.notice_labels == panel.notice_labels);
	CHECK(back.covariate_names == panel.covariate_names);
	CHECK(back.rows[0].notice == 0);
	CHECK(back.rows[1].notice == 1);
	CHECK(back.rows[1].duration == 5);
	CHECK(back.rows[1].censored);
	CHECK(back.rows[0].x[0] == Approx(41.25));
}

TEST_CASE("panel csv reports schema violations with row and column") {
	auto parse = [](const std::string& text) {
		std::istringstream in(text);
		return read_panel_csv(in);
	};
	CHECK_THROWS_WITH(parse("id,notice,duration\n"),
	                  Catch::Matchers::ContainsSubstring("censored"));
	CHECK_THROWS_WITH(parse("id,notice,duration,censored\n1,a,0,0\n"),
	                  Catch::Matchers::ContainsSubstring("row 2"));
	CHECK_THROWS_WITH(parse("id,notice,duration,censored\n1,a,2,7\n"),
	                  Catch::Matchers::ContainsSubstring("censored"));
	CHECK_THROWS_WITH(parse("id,notice,duration,censored,x_a\n1,g,2,0\n"),
	                  Catch::Matchers::ContainsSubstring("expected 5 fields"));
	CHECK_THROWS_WITH(parse("id,notice,duration,censored,x_a\n1,g,2,0,oops\n"),
	                  Catch::Matchers::ContainsSubstring("numeric"));
	// missing covariate values are rejected outright
	CHECK_THROWS(parse("id,notice,duration,censored,x_a\n1,g,2,0,\n"));
}

TEST_CASE("unknown notice labels are rejected when levels are pinned") {
	std::istringstream in("id,notice,duration,censored\n1,weird,2,0\n");
	CHECK_THROWS_WITH(read_panel_csv(in, {"short", "long"}),
	                  Catch::Matchers::ContainsSubstring("weird"));
}

TEST_CASE("week durations bin by ceiling division with week zero in bin one") {
	std::istringstream in(
	    "id,notice,duration,censored\n"
	    "1,g,0,0\n"
	    "2,g,1,0\n"
	    "3,g,12,0\n"
	    "4,g,13,0\n"
	    "5,g,24,0\n"
	    "6,g,25,1\n");
	const auto panel = read_panel_csv(in, {}, 12);
	std::vector<int> want = {1, 1, 1, 2, 2, 3};
	for (std::size_t i = 0; i < want.size(); ++i) CHECK(panel.rows[i].duration == want[i]);
}

TEST_CASE("exit rate csv round-trips and validates") {
	std::istringstream in(
	    "notice,d,numerator,denominator\n"
	    "short,1,0.1,1.0\n"
	    "short,2,0.12,0.9\n"
	    "long,1,0.2,1.0\n"
	    "long,2,0.15,0.8\n");
	std::vector<std::string> labels;
	const auto tab = read_exit_rate_csv(in, &labels);
	CHECK(labels == std::vector<std::string>{"short", "long"});
	CHECK(tab.n_groups == 2);
	CHECK(tab.dbar == 2);
	CHECK(tab.hazard(0, 1) == Approx(0.1));
	CHECK(tab.hazard(1, 2) == Approx(0.15 / 0.8));

	std::istringstream missing(
	    "notice,d,numerator,denominator\n"
	    "short,1,0.1,1.0\n"
	    "short,2,0.12,0.9\n"
	    "long,1,0.2,1.0\n");
	CHECK_THROWS_WITH(read_exit_rate_csv(missing),
	                  Catch::Matchers::ContainsSubstring("missing exit-rate cell"));

	std::istringstream dup(
	    "notice,d,numerator,denominator\n"
	    "short,1,0.1,1.0\n"
	    "short,1,0.1,1.0\n");
	CHECK_THROWS_WITH(read_exit_rate_csv(dup),
	                  Catch::Matchers::ContainsSubstring("duplicate"));

	std::istringstream bad("notice,d,numerator,denominator\nshort,1,1.5,1.0\n");
	CHECK_THROWS(read_exit_rate_csv(bad));
}
