#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "fixtures.hpp"
#include "huequery/engine.hpp"

using namespace hq;
namespace fs = std::filesystem;

namespace {

struct Service {
  fixtures::TempDir dir{"hq_engine_test"};
  std::unique_ptr<Engine> engine;

  Service() {
    SyntheticConfig cfg;
    cfg.persons = 40;
    write_synthetic_dataset(dir.path / "src", cfg, {true, true});
    EngineConfig ec;
    ec.data_dir = dir.path / "data";
    engine = std::make_unique<Engine>(ec);
    engine->register_dataset("syn", dir.path / "src");
  }
};

std::map<fs::path, std::string> snapshot(const fs::path& dir) {
  std::map<fs::path, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path()] = fixtures::slurp(e.path());
  return out;
}

TrainRequest request(Garment g, std::string label, EngineKind engine = EngineKind::generative,
                     std::size_t k = 6) {
  TrainRequest r;
  r.dataset = "syn";
  r.garment = g;
  r.label = std::move(label);
  r.engine = engine;
  r.k = k;
  return r;
}

}  // namespace

TEST_CASE("config file parsing") {
  fixtures::TempDir dir("hq_engine_cfg");
  const auto file = dir.path / "c.toml";
  {
    std::ofstream out(file);
    out << "seed = 9\n[service]\nport = 9001  # comment\ndata_dir = \"/tmp/x\"\nworkers = 3\n"
        << "[gmm]\ntau = inf\ncomponents = 3\nstandard_mixture = true\n"
        << "[svm]\nkernel = \"rbf\"\ngamma = 0.5\n[eval]\ntrials = 4\nprecision_cutoffs = [5, 15]\n"
        << "[segmentation]\nsplit_lambda = 0.25\n";
  }
  const auto cfg = load_config(file);
  CHECK(cfg.seed == 9);
  CHECK(cfg.port == 9001);
  CHECK(cfg.data_dir == fs::path("/tmp/x"));
  CHECK(cfg.experiment.workers == 3);
  CHECK(std::isinf(cfg.experiment.filter.tau));
  CHECK(cfg.experiment.em.components == 3);
  CHECK(cfg.experiment.loglik_form == LoglikForm::standard_mixture);
  CHECK(cfg.experiment.svm.gamma == 0.5);
  CHECK(cfg.experiment.split.trials == 4);
  CHECK(cfg.experiment.precision_cutoffs == std::vector<std::size_t>{5, 15});
  CHECK(cfg.segmentation.split.area_weight == 0.25);

  {
    std::ofstream out(file);
    out << "[gmm]\ntau = 2\ntua = 3\n";
  }
  try {
    load_config(file);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("c.toml:3") != std::string::npos);
    CHECK(std::string(e.what()).find("gmm.tua") != std::string::npos);
  }
  {
    std::ofstream out(file);
    out << "[svm]\nkernel = linear\n";
  }
  CHECK_THROWS(load_config(file));
  CHECK_THROWS(load_config(dir.path / "missing.toml"));
  CHECK_NOTHROW(load_config(HQ_SOURCE_DIR "/config/huequery.toml"));

  EngineConfig env;
  setenv("HUEQUERY_PORT", "7123", 1);
  setenv("HUEQUERY_DATA_DIR", "/tmp/hq-env", 1);
  apply_env_overrides(env);
  unsetenv("HUEQUERY_PORT");
  unsetenv("HUEQUERY_DATA_DIR");
  CHECK(env.port == 7123);
  CHECK(env.data_dir == fs::path("/tmp/hq-env"));
}

TEST_CASE("query AST JSON round-trip") {
  const auto ast = parse_query("red top and blue shorts or black coat");
  const auto j = to_json(ast);
  CHECK(j["op"] == "or");
  CHECK(ast_from_json(j) == ast);
  CHECK_THROWS(ast_from_json(nlohmann::json{{"op", "xor"}}));
}

TEST_CASE("model ids") {
  const auto a = model_id(EngineKind::generative, Garment::upper, "Pale Beige", "syn", "h", {"a", "b"}, {});
  CHECK(a.starts_with("gmm-upper-pale-beige-"));
  CHECK(a.size() == std::string("gmm-upper-pale-beige-").size() + 12);
  CHECK(a == model_id(EngineKind::generative, Garment::upper, "Pale Beige", "syn", "h", {"a", "b"}, {}));
  CHECK(a != model_id(EngineKind::generative, Garment::upper, "Pale Beige", "syn", "h", {"a", "c"}, {}));
  CHECK(model_id(EngineKind::discriminative, Garment::lower, "x", "syn", "h", {"a"}, {"b"}).starts_with("svm-lower-x-"));
}

TEST_CASE("engine workflow") {
  Service svc;
  auto& eng = *svc.engine;
  CHECK(eng.dataset_names() == std::vector<std::string>{"syn"});
  CHECK_THROWS_AS(eng.dataset("nope"), ServiceError);
  CHECK_NOTHROW(eng.register_dataset("syn", svc.dir.path / "src"));
  fs::create_directories(svc.dir.path / "elsewhere");
  try {
    eng.register_dataset("syn", svc.dir.path / "elsewhere");
    FAIL("expected a conflict");
  } catch (const ServiceError& e) {
    CHECK(e.status() == 409);
  }

  SUBCASE("untrained labels are reported") {
    RetrievalRequest q{"syn", "red shirt"};
    try {
      eng.query(q);
      FAIL("expected UntrainedLabel");
    } catch (const UntrainedLabel& e) {
      CHECK(e.status() == 409);
      CHECK(e.trained().empty());
    }
    q.text = "red hat";
    try {
      eng.query(q);
      FAIL("expected a parse error");
    } catch (const ServiceError& e) {
      CHECK(e.status() == 422);
      CHECK(e.code() == "parse_error");
    }
  }

  SUBCASE("train and query") {
    const auto r1 = eng.train(request(Garment::upper, "red"));
    CHECK(r1.created);
    CHECK(r1.model.positives == 6);
    CHECK(r1.model.negatives == 0);
    CHECK(fs::exists(r1.model.path));
    const auto again = eng.train(request(Garment::upper, "red"));
    CHECK_FALSE(again.created);
    CHECK(again.model.id == r1.model.id);

    eng.train(request(Garment::lower, "black"));
    RetrievalRequest q{"syn", "a red shirt and black trousers"};
    q.top_n = 5;
    const auto resp = eng.query(q);
    CHECK(resp.ranked.size() == 5);
    CHECK(resp.model_ids.size() == 2);
    CHECK(resp.model_ids.at("red upper") == r1.model.id);
    const auto& ds = *eng.dataset("syn");
    for (const auto& item : resp.ranked) {
      CHECK(ds.has_label(item.id, Garment::upper, "red"));
      CHECK(item.image == "/v1/samples/" + item.id + "/image?dataset=syn");
    }
    for (std::size_t i = 1; i < resp.ranked.size(); ++i) CHECK(resp.ranked[i - 1].score >= resp.ranked[i].score);

    RetrievalRequest via_ast{"syn"};
    via_ast.ast = parse_query("red shirt and black trousers");
    via_ast.top_n = 5;
    const auto resp2 = eng.query(via_ast);
    for (std::size_t i = 0; i < 5; ++i) CHECK(resp2.ranked[i].id == resp.ranked[i].id);

    try {
      eng.query({"syn", "red shirt or green shirt"});
      FAIL("expected UntrainedLabel");
    } catch (const UntrainedLabel& e) {
      CHECK(e.trained() == std::vector<std::string>{"black lower", "red upper"});
    }
    const auto j = to_json(resp);
    CHECK(j["ranked"].size() == 5);
    CHECK(j["query"]["op"] == "and");
  }

  SUBCASE("generative training rejects negatives") {
    auto req = request(Garment::upper, "red");
    req.negative_ids = {eng.dataset("syn")->samples().front().id};
    try {
      eng.train(req);
      FAIL("expected rejection");
    } catch (const ServiceError& e) {
      CHECK(e.status() == 422);
      CHECK(e.code() == "negatives_rejected");
    }
  }

  SUBCASE("discriminative training draws negatives") {
    const auto r = eng.train(request(Garment::upper, "white", EngineKind::discriminative, 4));
    CHECK(r.model.negatives == 4);
    CHECK(r.model.id.starts_with("svm-upper-white-"));
    RetrievalRequest q{"syn", "white shirt"};
    q.engine = EngineKind::discriminative;
    CHECK(eng.query(q).ranked.size() == 10);
    CHECK_THROWS_AS(eng.query({"syn", "white shirt"}), UntrainedLabel);
  }

  SUBCASE("insufficient and unknown inputs") {
    try {
      eng.train(request(Garment::upper, "mauve"));
      FAIL("expected an error");
    } catch (const ServiceError& e) {
      CHECK(e.status() == 422);
    }
    auto req = request(Garment::upper, "red");
    req.sample_ids = {"ghost"};
    try {
      eng.train(req);
      FAIL("expected an error");
    } catch (const ServiceError& e) {
      CHECK(e.status() == 404);
    }
  }

  SUBCASE("new labels leave existing models untouched") {
    eng.train(request(Garment::upper, "white"));
    eng.train(request(Garment::upper, "yellow"));
    const auto before = snapshot(eng.models().dir());
    RetrievalRequest q{"syn", "white shirt"};
    q.top_n = 50;
    const auto prior = eng.query(q);

    const auto& ds = *eng.dataset("syn");
    auto light = request(Garment::upper, "light", EngineKind::generative, 0);
    for (const auto& id : ds.positives(Garment::upper, "light")) {
      if (ds.has_label(id, Garment::upper, "white") || ds.has_label(id, Garment::upper, "yellow")) {
        light.sample_ids.push_back(id);
      }
    }
    REQUIRE(light.sample_ids.size() >= 4);
    const auto lr = eng.train(light);
    CHECK(lr.created);
    CHECK(lr.model.positives == light.sample_ids.size());
    const auto after = snapshot(eng.models().dir());
    CHECK(after.size() == before.size() + 1);
    for (const auto& [p, bytes] : before) CHECK(after.at(p) == bytes);
    const auto post = eng.query(q);
    REQUIRE(post.ranked.size() == prior.ranked.size());
    for (std::size_t i = 0; i < prior.ranked.size(); ++i) {
      CHECK(post.ranked[i].id == prior.ranked[i].id);
      CHECK(post.ranked[i].score == prior.ranked[i].score);
    }
  }

  SUBCASE("annotations and unlabeled samples") {
    const auto& ds = *eng.dataset("syn");
    const auto id = ds.samples().front().id;
    const auto before = eng.unlabeled(ds, "teal", Garment::upper).size();
    CHECK(before == ds.samples().size());
    CHECK(eng.annotate("syn", {id, Garment::upper, "teal", "tester", ""}));
    CHECK_FALSE(eng.annotate("syn", {id, Garment::upper, "teal", "tester", ""}));
    CHECK(eng.unlabeled(ds, "teal", Garment::upper).size() == before - 1);
    CHECK_THROWS_AS(eng.annotate("syn", {"ghost", Garment::upper, "teal", "", ""}), ServiceError);
    CHECK(eng.sample_image(id) == ds.find(id)->image_path);
    CHECK_THROWS_AS(eng.sample_image("ghost"), ServiceError);
  }

  SUBCASE("reports") {
    const nlohmann::json rep{{"kind", "robustness"}};
    const auto id = eng.save_report("robustness", rep, [&](const fs::path& dir) {
      fs::create_directories(dir / "pr_curves");
      std::ofstream(dir / "report.json") << rep.dump();
      std::ofstream(dir / "report.txt") << "table\n";
      std::ofstream(dir / "pr_curves" / "x.csv") << "trial,rank,precision,recall\n0,1,1,0.5\n";
    });
    CHECK(id.starts_with("robustness-"));
    const auto j = eng.report(id);
    CHECK(j["id"] == id);
    CHECK(j["table"] == "table\n");
    CHECK(j["pr_curves"]["x"]["points"][0][3] == 0.5);
    CHECK_THROWS_AS(eng.report("nope"), ServiceError);
  }
}

TEST_CASE("model store ordering and publish") {
  fixtures::TempDir dir("hq_engine_store");
  ModelStore store(dir.path);
  nlohmann::json doc{{"engine", "generative"}, {"garment", "upper"}, {"label", "red"},
                     {"dataset", "a"}, {"created", "2026-01-01T00:00:00.000Z"},
                     {"positives", 1}, {"negatives", 0}};
  doc["id"] = "gmm-upper-red-000000000001";
  CHECK(store.publish("gmm-upper-red-000000000001", doc));
  CHECK_FALSE(store.publish("gmm-upper-red-000000000001", doc));
  doc["created"] = "2026-01-02T00:00:00.000Z";
  doc["dataset"] = "b";
  doc["id"] = "gmm-upper-red-000000000002";
  CHECK(store.publish("gmm-upper-red-000000000002", doc));
  const auto list = store.list();
  REQUIRE(list.size() == 2);
  CHECK(list[0].id == "gmm-upper-red-000000000001");
  CHECK(store.latest(Garment::upper, "red", EngineKind::generative)->id == "gmm-upper-red-000000000002");
  CHECK(store.latest(Garment::upper, "red", EngineKind::generative, "a")->id == "gmm-upper-red-000000000001");
  CHECK_FALSE(store.latest(Garment::lower, "red", EngineKind::generative));
  CHECK_FALSE(store.find("missing"));
  CHECK_THROWS_AS(store.read("../etc"), ServiceError);
}

TEST_CASE("job runner") {
  JobRunner jobs;
  const auto ok = jobs.submit("t", [] { return nlohmann::json{{"v", 1}}; });
  const auto bad = jobs.submit("t", []() -> nlohmann::json { throw ServiceError(422, "x", "boom"); });
  const auto done = jobs.wait(ok);
  CHECK(done.state == JobState::done);
  CHECK(done.result["v"] == 1);
  const auto failed = jobs.wait(bad);
  CHECK(failed.state == JobState::failed);
  CHECK(failed.error_status == 422);
  CHECK(failed.error == "boom");
  CHECK_FALSE(jobs.status("nope"));
  CHECK(to_string(JobState::running) == "running");
}
