#include <doctest.h>

#include <thread>

#include <httplib.h>

#include "irag/errors.hpp"
#include "irag/json_schema.hpp"
#include "irag/service.hpp"
#include "support.hpp"

using namespace irag;
using nlohmann::json;

namespace {

// Three chunks embedded by a scripted gateway; every search ties.
std::shared_ptr<const VectorIndex> scripted_index(testing::ScriptedGateway& g) {
    const std::vector<Chunk> chunks{testing::make_chunk("issue-1#0", "first chunk"),
                                    testing::make_chunk("issue-2#0", "second chunk"),
                                    testing::make_chunk("issue-3#0", "third chunk")};
    return std::make_shared<const VectorIndex>(build_index(chunks, g));
}

ServiceSettings small_settings() {
    ServiceSettings s;
    s.max_query_chars = 10;
    s.cors_origins = {"http://ui.example"};
    return s;
}

json body_of(const HttpReply& r) { return json::parse(r.body); }

std::string explain_body(const std::string& query) { return json{{"query", query}}.dump(); }

}  // namespace

TEST_SUITE("service") {
    TEST_CASE("explain rejects malformed requests before any model call") {
        testing::ScriptedGateway g;
        ExplainService svc(scripted_index(g), g, testing::deterministic_generation(), small_settings());
        const auto calls_before = g.chat_calls();
        for (const auto& [body, code] : std::vector<std::pair<std::string, std::string>>{
                 {"not json", "bad_request"},
                 {"[1]", "bad_request"},
                 {R"({"q": "x"})", "bad_request"},
                 {R"({"query": 5})", "bad_request"},
                 {R"({"query": "   "})", "query_empty"},
                 {explain_body("eleven char"), "query_too_long"},
                 {"{\"query\": \"\xff\"}", "bad_request"}}) {
            CAPTURE(body);
            const auto r = svc.handle_explain(body);
            CHECK(r.status == 400);
            if (r.status == 400) CHECK(body_of(r)["error"] == code);
        }
        CHECK(svc.handle_explain(explain_body("ten chars!")).status != 400);
        CHECK(g.chat_calls() > calls_before);
    }

    TEST_CASE("explain without an index answers 503") {
        testing::ScriptedGateway g;
        ExplainService svc(nullptr, g, testing::deterministic_generation(), small_settings());
        const auto r = svc.handle_explain(explain_body("q"));
        CHECK(r.status == 503);
        CHECK(body_of(r)["error"] == "index_not_loaded");
        CHECK(svc.handle_chunk_lookup("issue-1#0").status == 503);
        CHECK(g.chat_calls() == 0);
    }

    TEST_CASE("model failures map to 502") {
        testing::ScriptedGateway down;
        auto index = scripted_index(down);
        down.fail_on("### ISSUE EXCERPTS");
        ExplainService svc(index, down, testing::deterministic_generation(), small_settings());
        auto r = svc.handle_explain(explain_body("q"));
        CHECK(r.status == 502);
        CHECK(body_of(r)["error"] == "gateway_error");

        testing::ScriptedGateway prose;
        prose.on("### ISSUE EXCERPTS", {"prose only"});
        auto cfg = testing::deterministic_generation();
        cfg.max_repairs = 0;
        ExplainService svc2(index, prose, cfg, small_settings());
        r = svc2.handle_explain(explain_body("q"));
        CHECK(r.status == 502);
        CHECK(body_of(r)["error"] == "generation_failed");

        testing::ScriptedGateway no_embed;
        no_embed.fail_embed(true);
        ExplainService svc3(index, no_embed, testing::deterministic_generation(), small_settings());
        CHECK(svc3.handle_explain(explain_body("q")).status == 502);
    }

    TEST_CASE("successful explain replies are schema-valid") {
        auto st = testing::relay_stack(7);
        std::shared_ptr<const VectorIndex> index(std::move(st.index));
        ExplainService svc(index, *st.gateway, testing::deterministic_generation(), ServiceSettings{});
        const auto r = svc.handle_explain(explain_body("What is the maximum file size for uploads?"));
        REQUIRE(r.status == 200);
        const auto j = body_of(r);
        CHECK(validate_explanation_json(j).empty());
        CHECK(j["context_found"] == true);
        CHECK(j["generated_at"] == "1970-01-01T00:00:00Z");

        const auto off = body_of(svc.handle_explain(explain_body("Who invented the telephone?")));
        CHECK(off["context_found"] == false);
        CHECK(off["evidence"].empty());
    }

    TEST_CASE("chunk lookup") {
        testing::ScriptedGateway g;
        ExplainService svc(scripted_index(g), g, testing::deterministic_generation(), small_settings());
        const auto ok = svc.handle_chunk_lookup("issue-2#0");
        REQUIRE(ok.status == 200);
        CHECK(body_of(ok)["chunk_id"] == "issue-2#0");
        CHECK(body_of(ok)["text"] == "second chunk");
        CHECK(svc.handle_chunk_lookup("issue-9#0").status == 404);
        for (const char* bad : {"", "issue-2", "issue-x#0", "chunk-2#0", "issue-2#0 "}) {
            CAPTURE(bad);
            CHECK(svc.handle_chunk_lookup(bad).status == 400);
        }
    }

    TEST_CASE("health reports index and gateway state") {
        testing::ScriptedGateway g;
        auto index = scripted_index(g);
        ExplainService svc(index, g, testing::deterministic_generation(), small_settings());
        const auto h = body_of(svc.handle_health());
        CHECK(h["status"] == "ok");
        CHECK(h["index_loaded"] == true);
        CHECK(h["corpus_size"] == 3);
        CHECK(h["embedder_id"] == "scripted");
        CHECK(h["index_checksum"] == index_checksum(*index));
        CHECK(h["index_checksum"].get<std::string>().size() == 16);

        ExplainService empty(nullptr, g, testing::deterministic_generation(), small_settings());
        const auto e = body_of(empty.handle_health());
        CHECK(e["status"] == "degraded");
        CHECK(e["index_checksum"].is_null());
    }

    TEST_CASE("cors origins") {
        testing::ScriptedGateway g;
        ExplainService svc(nullptr, g, testing::deterministic_generation(), small_settings());
        CHECK(svc.allowed_origin("http://ui.example") == "http://ui.example");
        CHECK_FALSE(svc.allowed_origin("http://evil.example"));
        CHECK_FALSE(svc.allowed_origin(""));
        ServiceSettings any;
        any.cors_origins = {"*"};
        ExplainService open(nullptr, g, testing::deterministic_generation(), any);
        CHECK(open.allowed_origin("http://whatever") == "*");
        ExplainService closed(nullptr, g, testing::deterministic_generation(), ServiceSettings{});
        CHECK_FALSE(closed.allowed_origin("http://ui.example"));
    }

    TEST_CASE("listen addresses") {
        CHECK(parse_listen_address("127.0.0.1:8080") == std::pair<std::string, int>{"127.0.0.1", 8080});
        CHECK(parse_listen_address("[::1]:0") == std::pair<std::string, int>{"[::1]", 0});
        for (const char* bad : {"8080", ":8080", "host:", "host:x", "host:70000", "host:-1", "host:80a"}) {
            CAPTURE(bad);
            CHECK_THROWS_AS(parse_listen_address(bad), ConfigError);
        }
    }

    TEST_CASE("the http server routes requests and sets cors headers") {
        testing::ScriptedGateway g;
        ExplainService svc(scripted_index(g), g, testing::deterministic_generation(), small_settings());
        HttpServer server(svc);
        const int port = server.bind("127.0.0.1", 0);
        REQUIRE(port > 0);
        std::thread runner([&] { server.run(); });
        httplib::Client cli("127.0.0.1", port);
        cli.set_connection_timeout(2);
        for (int i = 0; i < 200 && !server.running(); ++i) std::this_thread::sleep_for(std::chrono::milliseconds(5));

        const httplib::Headers origin{{"Origin", "http://ui.example"}};
        auto health = cli.Get("/api/health", origin);
        REQUIRE(health);
        CHECK(health->status == 200);
        CHECK(health->get_header_value("Access-Control-Allow-Origin") == "http://ui.example");
        CHECK(health->get_header_value("Content-Type").find("application/json") != std::string::npos);

        auto other = cli.Get("/api/health", httplib::Headers{{"Origin", "http://evil.example"}});
        REQUIRE(other);
        CHECK_FALSE(other->has_header("Access-Control-Allow-Origin"));

        auto pre = cli.Options("/api/explain", origin);
        REQUIRE(pre);
        CHECK(pre->status == 204);
        CHECK(pre->get_header_value("Access-Control-Allow-Methods").find("POST") != std::string::npos);

        auto chunk = cli.Get("/api/chunks/issue-1%230");
        REQUIRE(chunk);
        CHECK(chunk->status == 200);
        CHECK(json::parse(chunk->body)["chunk_id"] == "issue-1#0");

        auto bad = cli.Post("/api/explain", "{}", "application/json");
        REQUIRE(bad);
        CHECK(bad->status == 400);

        auto missing = cli.Get("/api/nothing");
        REQUIRE(missing);
        CHECK(missing->status == 404);
        CHECK(json::parse(missing->body)["error"] == "not_found");

        server.stop();
        runner.join();
        CHECK_FALSE(server.running());
    }
}
