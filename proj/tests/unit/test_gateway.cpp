#include <doctest.h>

#include <atomic>
#include <cmath>
#include <thread>

#include "irag/errors.hpp"
#include "irag/gateway.hpp"
#include "support.hpp"

using namespace irag;
using nlohmann::json;

namespace {

constexpr double kBinary[] = {0, 1};
constexpr double kOrdinal[] = {0, 5, 10};

ChatRequest request(const std::string& system, const std::string& user) {
    ChatRequest r;
    r.model = "m";
    r.system_prompt = system;
    r.user_prompt = user;
    return r;
}

double norm(const Embedding& e) {
    double s = 0;
    for (float v : e) s += static_cast<double>(v) * v;
    return std::sqrt(s);
}

double dot(const Embedding& a, const Embedding& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

// Tracks the peak number of concurrent do_chat calls.
class SlowGateway final : public ModelGateway {
public:
    explicit SlowGateway(std::size_t cap) : ModelGateway(GatewaySettings{"slow", "", "", "", 1, cap, 0, 0, ""}) {}
    std::string embedder_id() const override { return "slow"; }
    bool reachable() override { return true; }
    int peak() const { return peak_.load(); }

protected:
    ChatResponse do_chat(const ChatRequest&) override {
        const int now = ++active_;
        int prev = peak_.load();
        while (now > prev && !peak_.compare_exchange_weak(prev, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --active_;
        return {"ok", "slow", 0};
    }
    std::vector<Embedding> do_embed(std::span<const std::string> texts) override {
        return std::vector<Embedding>(texts.size(), Embedding{1.0f});
    }

private:
    std::atomic<int> active_{0};
    std::atomic<int> peak_{0};
};

}  // namespace

TEST_SUITE("gateway") {
    TEST_CASE("mock url parsing") {
        GatewaySettings s;
        s.url = "mock:3";
        auto g = make_gateway(s);
        CHECK(g->embedder_id() == "mock:3:64");
        s.url = "mock:3:16";
        CHECK(make_gateway(s)->embedder_id() == "mock:3:16");
        for (const char* bad : {"mock:", "mock:x", "mock:1:0", "mock:1:y", "ftp://host", "localhost:11434"}) {
            s.url = bad;
            CAPTURE(bad);
            CHECK_THROWS_AS(make_gateway(s), ConfigError);
        }
    }

    TEST_CASE("mock embeddings are unit length, seeded and lexical") {
        auto g7 = testing::mock_gateway(7, "");
        auto g7b = testing::mock_gateway(7, "");
        auto g8 = testing::mock_gateway(8, "");
        const std::vector<std::string> texts{"upload file size limit", "file upload size limit", "archived channel"};
        const auto a = g7->embed(texts);
        CHECK(a == g7b->embed(texts));
        CHECK(a != g8->embed(texts));
        for (const auto& e : a) {
            CHECK(e.size() == 64);
            CHECK(norm(e) == doctest::Approx(1.0).epsilon(1e-5));
        }
        CHECK(dot(a[0], a[1]) == doctest::Approx(1.0).epsilon(1e-5));
        CHECK(dot(a[0], a[2]) < 0.9);
    }

    TEST_CASE("chat and embed preconditions") {
        auto g = testing::mock_gateway(1, "");
        auto r = request("s", "u");
        r.temperature = 2.5;
        CHECK_THROWS_AS(g->chat(r), PreconditionError);
        r.temperature = std::nan("");
        CHECK_THROWS_AS(g->chat(r), PreconditionError);
        CHECK_THROWS_AS(g->chat(request("s", "   ")), PreconditionError);
        r = request("s", "u");
        r.max_tokens = 0;
        CHECK_THROWS_AS(g->chat(r), PreconditionError);
        CHECK_THROWS_AS(g->embed(std::vector<std::string>{}), PreconditionError);
        CHECK_THROWS_AS(g->embed(std::vector<std::string>{"a", ""}), PreconditionError);
    }

    TEST_CASE("unmatched mock chat is a seeded pure function") {
        auto a = testing::mock_gateway(5, "");
        auto b = testing::mock_gateway(5, "");
        auto c = testing::mock_gateway(6, "");
        const auto r = request("sys", "hello");
        CHECK(a->chat(r).text == b->chat(r).text);
        CHECK(a->chat(r).text != c->chat(r).text);
        CHECK(a->chat(r).text.rfind("mock-reply-", 0) == 0);
    }

    TEST_CASE("playbook rules need every match string and a known behavior") {
        const auto pb = Playbook::from_json(json::parse(R"({"rules": [
            {"match": ["alpha", "beta"], "response": "both"},
            {"match": "alpha", "response": "one"}]})"));
        MockGateway g(1, 8, pb, GatewaySettings{});
        CHECK(g.chat(request("alpha", "beta")).text == "both");
        CHECK(g.chat(request("alpha", "gamma")).text == "one");
        CHECK_THROWS_AS(Playbook::from_json(json::parse(R"([{"match": "x"}])")), ConfigError);
        CHECK_THROWS_AS(Playbook::from_json(json::parse(R"([{"match": "x", "behavior": "dance"}])")), ConfigError);
        CHECK_THROWS_AS(Playbook::load("/nonexistent/playbook.json"), Error);
    }

    TEST_CASE("prompt sections and content terms") {
        const std::string prompt = "intro\n### QUESTION\n  How are uploads limited?\n### CONTEXT\nctx line\n\nmore\n";
        CHECK(prompt_section(prompt, "QUESTION") == "How are uploads limited?");
        CHECK(prompt_section(prompt, "CONTEXT") == "ctx line\n\nmore");
        CHECK_FALSE(prompt_section(prompt, "ANSWER"));
        CHECK(content_terms("How are the Uploads limited? [TITLE] x1 ok") == std::vector<std::string>{"uploads", "limited"});
    }

    TEST_CASE("extract_json_object tolerates fences and prose") {
        CHECK(extract_json_object("```json\n{\"score\": 1}\n```")->at("score") == 1);
        CHECK(extract_json_object("Verdict: {\"a\": \"}{\", \"b\": {\"c\": 2}} trailing")->at("b").at("c") == 2);
        CHECK(extract_json_object("{broken {\"ok\": true}")->at("ok") == true);
        CHECK_FALSE(extract_json_object("no json here"));
        CHECK_FALSE(extract_json_object("[1, 2]"));
    }

    TEST_CASE("judge accepts in-scale scores as numbers or numeric strings") {
        testing::ScriptedGateway g;
        g.on("JUDGE-A", {R"({"score": 5, "justification": "half"})"});
        g.on("JUDGE-B", {R"(sure: {"score": "10"})"});
        const auto a = judge(g, "JUDGE-A", "payload", kOrdinal);
        CHECK(a.score == 5);
        CHECK(a.justification == "half");
        CHECK(a.attempts == 1);
        CHECK(judge(g, "JUDGE-B", "payload", kOrdinal).score == 10);
        const auto reqs = g.requests();
        CHECK(reqs[0].temperature == kJudgeTemperature);
        CHECK(reqs[0].response_format == ResponseFormat::json_object);
        CHECK(reqs[0].system_prompt.find("Allowed scores: 0, 5, 10") != std::string::npos);
    }

    TEST_CASE("judge repairs out-of-scale or malformed replies") {
        testing::ScriptedGateway g;
        g.on("JUDGE", {"not json", R"({"score": 7})", R"({"score": 1})"});
        const auto v = judge(g, "JUDGE", "payload", kBinary);
        CHECK(v.score == 1);
        CHECK(v.attempts == 3);
        const auto reqs = g.requests();
        REQUIRE(reqs.size() == 3);
        CHECK(reqs[1].user_prompt.find("### REPAIR") != std::string::npos);
        CHECK(reqs[1].user_prompt.find("not json") != std::string::npos);
    }

    TEST_CASE("judge gives up with the last raw reply") {
        testing::ScriptedGateway g;
        g.on("JUDGE", {R"({"score": 3})"});
        try {
            judge(g, "JUDGE", "payload", kBinary, 2);
            FAIL("expected VerdictInvalidError");
        } catch (const VerdictInvalidError& e) {
            CHECK(e.raw() == R"({"score": 3})");
        }
        CHECK(g.chat_calls() == 2);
        CHECK_THROWS_AS(judge(g, "JUDGE", "payload", std::span<const double>{}), PreconditionError);
    }

    TEST_CASE("overlap judge snaps to the allowed scale") {
        auto cooperative = testing::mock_gateway(1, "cooperative");
        const std::string payload =
            "### QUESTION\nupload size limit\n### ANSWER\nThe upload size limit is set by admins.\n";
        CHECK(judge(*cooperative, "Decide whether the ANSWER is helpful for the QUESTION.", payload, kBinary).score == 1);
        CHECK(judge(*cooperative, "Decide whether the ANSWER is helpful for the QUESTION.", payload, kOrdinal).score == 10);
        const std::string miss = "### QUESTION\nupload size limit\n### ANSWER\nThe weather is nice.\n";
        CHECK(judge(*cooperative, "Decide whether the ANSWER is helpful for the QUESTION.", miss, kBinary).score == 0);
    }

    TEST_CASE("format_scale renders integers without decimals") {
        constexpr double mixed[] = {0, 0.5, 1};
        CHECK(format_scale(kOrdinal) == "0, 5, 10");
        CHECK(format_scale(mixed) == "0, 0.5, 1");
    }

    TEST_CASE("concurrency cap bounds in-flight calls") {
        SlowGateway g(2);
        std::vector<std::jthread> threads;
        for (int i = 0; i < 8; ++i) threads.emplace_back([&] { g.chat(request("s", "u")); });
        threads.clear();
        CHECK(g.peak() >= 1);
        CHECK(g.peak() <= 2);
    }

    TEST_CASE("judge model falls back to the chat model") {
        GatewaySettings s;
        s.url = "mock:1";
        CHECK(make_gateway(s)->judge_model() == "default");
        s.chat_model = "chat";
        CHECK(make_gateway(s)->judge_model() == "chat");
        s.judge_model = "judge";
        CHECK(make_gateway(s)->judge_model() == "judge");
    }
}
