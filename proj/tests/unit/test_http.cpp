#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <filesystem>
#include <thread>

#include "fixtures.hpp"
#include "huequery/http.hpp"

#include "httplib.h"

using namespace hq;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Server {
  fixtures::TempDir dir{"hq_http_test"};
  std::unique_ptr<Engine> engine;
  std::unique_ptr<HttpService> service;
  std::thread thread;
  int port = -1;

  Server() {
    SyntheticConfig cfg;
    cfg.persons = 30;
    write_synthetic_dataset(dir.path / "src", cfg, {true, false});
    EngineConfig ec;
    ec.data_dir = dir.path / "data";
    engine = std::make_unique<Engine>(ec);
    engine->register_dataset("syn", dir.path / "src");
    service = std::make_unique<HttpService>(*engine);
    port = service->bind("127.0.0.1", 0);
    thread = std::thread([this] { service->run(); });
  }
  ~Server() {
    service->stop();
    thread.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(120, 0);
    return c;
  }
};

Server& server() {
  static Server s;
  return s;
}

json body_of(const httplib::Result& r) {
  REQUIRE(r);
  return json::parse(r->body);
}

json post(const std::string& path, const json& body, int expect) {
  auto c = server().client();
  auto r = c.Post(path, body.dump(), "application/json");
  REQUIRE(r);
  CAPTURE(r->body);
  CHECK(r->status == expect);
  CHECK(r->get_header_value("Content-Type") == "application/json");
  return json::parse(r->body);
}

json get(const std::string& path, int expect) {
  auto c = server().client();
  auto r = c.Get(path);
  REQUIRE(r);
  CAPTURE(r->body);
  CHECK(r->status == expect);
  return json::parse(r->body);
}

std::string first_id(const std::string& label) {
  const auto& ds = *server().engine->dataset("syn");
  return ds.positives(Garment::upper, label).front();
}

}  // namespace

TEST_CASE("health and datasets") {
  REQUIRE(server().port > 0);
  CHECK(get("/v1/health", 200)["status"] == "ok");
  const auto ds = get("/v1/datasets", 200)["datasets"];
  REQUIRE(ds.size() == 1);
  CHECK(ds[0]["name"] == "syn");
  CHECK(ds[0]["samples"] == 60);
  CHECK(ds[0]["labels"].size() > 5);
}

TEST_CASE("unknown routes and bad bodies return JSON errors") {
  const auto nf = get("/v1/nothing", 404);
  CHECK(nf["code"] == "not_found");
  CHECK(get("/v1/datasets/nope/samples", 404)["code"] == "not_found");
  auto c = server().client();
  auto r = c.Post("/v1/query", "not json", "application/json");
  REQUIRE(r);
  CHECK(r->status == 400);
  CHECK(json::parse(r->body)["code"] == "bad_request");
  CHECK(post("/v1/query", {{"dataset", "syn"}}, 400)["code"] == "bad_request");
}

TEST_CASE("samples listing and annotation") {
  const auto all = get("/v1/datasets/syn/samples?limit=5&offset=2", 200);
  CHECK(all["total"] == 60);
  CHECK(all["samples"].size() == 5);
  const auto id = all["samples"][0]["id"].get<std::string>();
  CHECK(all["samples"][0]["image"] == "/v1/samples/" + id + "/image?dataset=syn");
  CHECK(all["samples"][0]["mask_provenance"] == "external");

  const auto before = get("/v1/datasets/syn/samples?unlabeled_for=stripy&garment=upper", 200)["total"];
  CHECK(before == 60);
  const auto added = post("/v1/datasets/syn/annotations",
                          {{"image_id", id}, {"garment", "upper"}, {"label", "Stripy"}, {"author", "t"}}, 201);
  CHECK(added["results"][0]["added"] == true);
  CHECK(added["results"][0]["label"] == "stripy");
  const auto dup = post("/v1/datasets/syn/annotations",
                        {{"annotations", json::array({{{"image_id", id}, {"garment", "upper"}, {"label", "stripy"}}})}},
                        200);
  CHECK(dup["results"][0]["added"] == false);
  CHECK(get("/v1/datasets/syn/samples?unlabeled_for=stripy&garment=upper", 200)["total"] == 59);
  CHECK(post("/v1/datasets/syn/annotations", {{"image_id", "ghost"}, {"garment", "upper"}, {"label", "x"}}, 422)["code"] ==
        "invalid_annotation");
  CHECK(post("/v1/datasets/syn/annotations", {{"image_id", id}, {"garment", "hat"}, {"label", "x"}}, 422)["code"] ==
        "invalid_garment");
  CHECK(get("/v1/datasets/syn/samples?garment=hat", 422)["code"] == "invalid_garment");
}

TEST_CASE("training jobs, models and queries") {
  const auto job = post("/v1/models/train", {{"dataset", "syn"}, {"garment", "upper"}, {"label", "red"}, {"k", 4}}, 202);
  const auto url = job["status_url"].get<std::string>();
  CHECK(url == "/v1/jobs/" + job["job_id"].get<std::string>());
  json status;
  for (int i = 0; i < 600; ++i) {
    status = get(url, 200);
    if (status["state"] == "done" || status["state"] == "failed") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  REQUIRE(status["state"] == "done");
  const auto model_id = status["result"]["id"].get<std::string>();
  CHECK(model_id.starts_with("gmm-upper-red-"));

  const auto sync = post("/v1/models/train",
                         {{"dataset", "syn"}, {"garment", "lower"}, {"label", "black"}, {"k", 4}, {"wait", true}}, 201);
  CHECK(sync["created_now"] == true);
  CHECK(get("/v1/jobs/nope", 404)["code"] == "not_found");

  const auto models = get("/v1/models?garment=upper", 200)["models"];
  REQUIRE(models.size() == 1);
  CHECK(models[0]["id"] == model_id);
  CHECK(get("/v1/models?engine=discriminative", 200)["models"].empty());
  const auto doc = get("/v1/models/" + model_id, 200);
  CHECK(doc["label"] == "red");
  CHECK(doc.contains("components"));
  CHECK(get("/v1/models/missing", 404)["code"] == "not_found");

  const auto resp = post("/v1/query", {{"dataset", "syn"}, {"text", "red shirt and black trousers"}, {"top_n", 3}}, 200);
  CHECK(resp["query"]["op"] == "and");
  REQUIRE(resp["ranked"].size() == 3);
  CHECK(resp["model_ids"]["red upper"] == model_id);

  const auto by_ast = post("/v1/query", {{"dataset", "syn"}, {"query", resp["query"]}, {"top_n", 3}}, 200);
  for (std::size_t i = 0; i < 3; ++i) CHECK(by_ast["ranked"][i]["id"] == resp["ranked"][i]["id"]);

  const auto untrained = post("/v1/query", {{"dataset", "syn"}, {"text", "green shirt"}}, 409);
  CHECK(untrained["code"] == "untrained_label");
  CHECK(untrained["trained_labels"] == json::array({"black lower", "red upper"}));
  CHECK(post("/v1/query", {{"dataset", "syn"}, {"text", "green hat"}}, 422)["code"] == "parse_error");
  CHECK(post("/v1/query", {{"dataset", "nope"}, {"text", "red shirt"}}, 404)["code"] == "not_found");
  CHECK(post("/v1/query", {{"dataset", "syn"}, {"text", "red shirt"}, {"top_n", 0}}, 422)["code"] ==
        "invalid_request");

  CHECK(post("/v1/models/train",
             {{"dataset", "syn"}, {"garment", "upper"}, {"label", "red"}, {"negative_ids", {first_id("red")}}}, 422)["code"] ==
        "negatives_rejected");
  CHECK(post("/v1/models/train", {{"dataset", "nope"}, {"garment", "upper"}, {"label", "red"}}, 404)["code"] ==
        "not_found");
  CHECK(post("/v1/models/train", {{"dataset", "syn"}, {"garment", "upper"}, {"label", "red"}, {"engine", "tree"}}, 422)["code"] ==
        "invalid_engine");

  const auto failing = post("/v1/models/train", {{"dataset", "syn"}, {"garment", "upper"}, {"label", "mauve"}}, 202);
  const auto final_state = server().engine->jobs().wait(failing["job_id"].get<std::string>());
  CHECK(final_state.state == JobState::failed);
  const auto polled = get(failing["status_url"].get<std::string>(), 200);
  CHECK(polled["state"] == "failed");
  CHECK(polled["error"]["status"] == 422);
}

TEST_CASE("sample images") {
  const auto id = first_id("red");
  auto c = server().client();
  auto r = c.Get("/v1/samples/" + id + "/image?dataset=syn");
  REQUIRE(r);
  CHECK(r->status == 200);
  CHECK(r->get_header_value("Content-Type") == "image/png");
  const auto path = server().engine->dataset("syn")->find(id)->image_path;
  CHECK(r->body == fixtures::slurp(path));
  CHECK(get("/v1/samples/ghost/image", 404)["code"] == "not_found");
}

TEST_CASE("evaluation reports") {
  CHECK(get("/v1/eval/reports", 200)["reports"].empty());
  auto& eng = *server().engine;
  ExperimentConfig cfg;
  cfg.split.trials = 2;
  const auto report = run_robustness(*eng.dataset("syn"), {{Garment::lower, "blue"}}, {2},
                                     EngineKind::generative, cfg);
  const auto id = eng.save_report("robustness", to_json(report),
                                  [&](const fs::path& dir) { emit_report(report, dir); });
  CHECK(get("/v1/eval/reports", 200)["reports"] == json::array({id}));
  const auto j = get("/v1/eval/reports/" + id, 200);
  CHECK(j["kind"] == "robustness");
  CHECK(j["table"].get<std::string>().find("blue lower") != std::string::npos);
  CHECK(j["pr_curves"].contains("blue_lower_generative_k2"));
  CHECK(get("/v1/eval/reports/none", 404)["code"] == "not_found");
}
