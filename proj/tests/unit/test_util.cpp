#include <doctest.h>

#include <atomic>
#include <set>

#include "irag/assets.hpp"
#include "irag/errors.hpp"
#include "irag/json_schema.hpp"
#include "irag/util.hpp"
#include "support.hpp"

using namespace irag;

TEST_SUITE("util") {
    TEST_CASE("timestamps round-trip in both accepted suffixes") {
        const auto z = parse_utc_timestamp("2023-04-01T12:30:05Z");
        REQUIRE(z);
        CHECK(format_utc_timestamp(*z) == "2023-04-01T12:30:05Z");
        CHECK(parse_utc_timestamp("2023-04-01T12:30:05+00:00") == z);
        CHECK(parse_utc_timestamp("2023-04-01T12:30:05.250Z") == z);
        CHECK(format_utc_timestamp(Timestamp{}) == "1970-01-01T00:00:00Z");
    }

    TEST_CASE("timestamps reject local offsets and impossible dates") {
        CHECK_FALSE(parse_utc_timestamp("2023-04-01T12:30:05+02:00"));
        CHECK_FALSE(parse_utc_timestamp("2023-02-30T00:00:00Z"));
        CHECK_FALSE(parse_utc_timestamp("2023-04-01"));
        CHECK_FALSE(parse_utc_timestamp(""));
        CHECK_FALSE(parse_utc_timestamp("2023-04-01T25:00:00Z"));
    }

    TEST_CASE("fnv1a64 reference vectors") {
        CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
        CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
        CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
        CHECK(hex64(0xabcULL) == "0000000000000abc");
    }

    TEST_CASE("splitmix64 reference sequence from zero") {
        std::uint64_t s = 0;
        CHECK(splitmix64(s) == 0xe220a8397b1dcdafULL);
        CHECK(splitmix64(s) == 0x6e789e6aa1b965f4ULL);
    }

    TEST_CASE("utf8 validation") {
        CHECK_FALSE(find_invalid_utf8("plain ascii"));
        CHECK_FALSE(find_invalid_utf8("caf\xc3\xa9 \xf0\x9f\x99\x82"));
        CHECK(find_invalid_utf8("ab\xff") == 2u);
        CHECK(find_invalid_utf8("ab\xc0\xaf") == 2u);          // overlong '/'
        CHECK(find_invalid_utf8("\xed\xa0\x80") == 0u);        // surrogate
        CHECK(find_invalid_utf8("x\xe2\x82") == 1u);           // truncated
    }

    TEST_CASE("utf8 length and truncation count code points") {
        const std::string s = "a\xc3\xa9\xe6\xbc\xa2\xf0\x9f\x99\x82";
        CHECK(utf8_length(s) == 4);
        CHECK(utf8_truncate(s, 2) == "a\xc3\xa9");
        CHECK(utf8_truncate(s, 0).empty());
        CHECK(utf8_truncate(s, 10) == s);
    }

    TEST_CASE("split_lines handles CRLF and a missing final newline") {
        CHECK(split_lines("a\r\nb\nc") == std::vector<std::string>{"a", "b", "c"});
        CHECK(split_lines("a\n\nb\n") == std::vector<std::string>{"a", "", "b"});
        CHECK(split_lines("").empty());
    }

    TEST_CASE("render_template substitutes known names only") {
        CHECK(render_template("{{a}} and {{b}} and {{a}}", {{"a", "1"}}) == "1 and {{b}} and 1");
        CHECK(render_template("no placeholders", {}) == "no placeholders");
        CHECK(render_template("{{a}}", {{"a", "{{a}}"}}) == "{{a}}");
    }

    TEST_CASE("parallel_for visits every index once") {
        std::vector<std::atomic<int>> seen(257);
        parallel_for(seen.size(), 8, [&](std::size_t i) { seen[i]++; });
        for (auto& s : seen) CHECK(s.load() == 1);
    }

    TEST_CASE("parallel_for rethrows a task failure after joining") {
        std::atomic<int> ran{0};
        CHECK_THROWS_AS(parallel_for(50, 4,
                                     [&](std::size_t i) {
                                         ++ran;
                                         if (i == 7) throw PreconditionError("seven");
                                     }),
                        PreconditionError);
        CHECK(ran.load() >= 1);
    }

    TEST_CASE("read_file reports missing paths") {
        CHECK_THROWS_AS(read_file("/nonexistent/irag/file"), Error);
    }
}

TEST_SUITE("util") {
    TEST_CASE("every prompt asset is embedded and fingerprinted") {
        const auto names = assets::names();
        CHECK(names.size() == 12);
        std::set<std::string> prints;
        for (auto n : names) {
            CHECK_FALSE(assets::get(n).empty());
            const auto fp = assets::fingerprint(n);
            CHECK(fp.rfind(std::string(n) + "@fnv1a64:", 0) == 0);
            prints.insert(fp);
        }
        CHECK(prints.size() == names.size());
        CHECK_THROWS_AS(assets::get("prompts/missing.txt"), Error);
    }

    TEST_CASE("embedded assets equal the files on disk") {
        for (auto n : assets::names()) {
            const std::string rel = std::string(n).rfind("prompts/", 0) == 0 ? "assets/" + std::string(n) : std::string(n);
            CHECK(assets::get(n) == testing::read_source(rel));
        }
    }

    TEST_CASE("schema validator covers the keywords the result schema uses") {
        using nlohmann::json;
        const json schema = {
            {"type", "object"},
            {"required", {"a", "b"}},
            {"additionalProperties", false},
            {"properties",
             {{"a", {{"type", "string"}, {"minLength", 2}, {"pattern", "^x"}}},
              {"b", {{"type", "array"}, {"maxItems", 2}, {"items", {{"type", "integer"}, {"minimum", 0}}}}},
              {"c", {{"enum", {"p", "q"}}}}}}};
        CHECK(validate_json_schema(schema, json{{"a", "xy"}, {"b", {1, 2}}}).empty());
        CHECK(validate_json_schema(schema, json{{"a", "xy"}}).size() == 1);
        CHECK(validate_json_schema(schema, json{{"a", "y"}, {"b", json::array()}}).size() == 2);
        CHECK(validate_json_schema(schema, json{{"a", "xy"}, {"b", {1, -1, 2}}}).size() == 2);
        CHECK(validate_json_schema(schema, json{{"a", "xy"}, {"b", {1}}, {"z", 1}}).size() == 1);
        CHECK(validate_json_schema(schema, json{{"a", "xy"}, {"b", {1}}, {"c", "r"}}).size() == 1);
    }

    TEST_CASE("if/then applies to abstaining results") {
        using nlohmann::json;
        const json schema = {{"if", {{"properties", {{"flag", {{"const", false}}}}}}},
                             {"then", {{"properties", {{"items", {{"maxItems", 0}}}}}}}};
        CHECK(validate_json_schema(schema, json{{"flag", false}, {"items", json::array()}}).empty());
        CHECK_FALSE(validate_json_schema(schema, json{{"flag", false}, {"items", {1}}}).empty());
        CHECK(validate_json_schema(schema, json{{"flag", true}, {"items", {1}}}).empty());
    }
}
