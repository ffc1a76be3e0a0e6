#include "huequery/cli.hpp"

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "huequery/engine.hpp"
#include "huequery/http.hpp"
#include "huequery/synthetic.hpp"

namespace fs = std::filesystem;

namespace hq {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v < 1) throw std::invalid_argument(item);
      ks.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("--k expects a comma-separated list of positive integers, got '" + text + "'");
    }
  }
  if (ks.empty()) throw UsageError("--k is empty");
  return ks;
}

QueryTarget single_leaf(const std::string& text, const Lexicon& lexicon) {
  QueryAst ast;
  try {
    ast = parse_query(text, lexicon);
  } catch (const ParseError& e) {
    throw UsageError("query '" + text + "': " + e.what());
  }
  if (!ast.is_leaf()) {
    throw UsageError("evaluation queries name one garment colour, got '" + text + "'");
  }
  return {ast.garment, ast.color_label};
}

std::vector<EngineKind> engines_for(const std::string& name) {
  if (name == "both") return {EngineKind::generative, EngineKind::discriminative};
  try {
    return {parse_engine(name)};
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

HttpService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Text-query person retrieval over garment colour models", "huequery"};
  app.require_subcommand(1);

  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string data_dir;
  int workers = 0;
  app.add_option("--config", config_file, "TOML-style configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Seed for splits, EM restarts and SVM subsampling");
  app.add_option("--data-dir", data_dir, "Directory holding datasets/, models/ and reports/");
  app.add_option("--workers", workers, "Worker threads (default: from config, else 1)");

  // generate-synthetic
  auto* gen = app.add_subcommand("generate-synthetic", "Render a synthetic pedestrian corpus");
  std::string gen_dir;
  SyntheticConfig synth;
  bool gen_masks = false, gen_extra = false;
  gen->add_option("dir", gen_dir, "Output directory")->required();
  gen->add_option("--persons", synth.persons, "Number of persons")->check(CLI::PositiveNumber);
  gen->add_option("--views", synth.views_per_person, "Images per person")->check(CLI::Range(1, 8));
  gen->add_option("--prefix", synth.id_prefix, "Sample id prefix");
  gen->add_option("--cast", synth.camera.color_cast_deg, "Hue cast of the camera in degrees");
  gen->add_option("--noise", synth.camera.pixel_noise, "RGB noise standard deviation");
  gen->add_flag("--masks", gen_masks, "Also write figure masks");
  gen->add_flag("--extra-labels", gen_extra, "Also annotate light/dark labels");

  // ingest
  auto* ing = app.add_subcommand("ingest", "Register and segment an image directory");
  std::string ing_path, ing_name;
  bool ing_no_cache = false;
  ing->add_option("path", ing_path, "Dataset root with images/ and annotations.tsv")->required();
  ing->add_option("--name", ing_name, "Dataset name (default: directory name)");
  ing->add_flag("--no-cache", ing_no_cache, "Ignore cached regions");

  // annotate
  auto* ann = app.add_subcommand("annotate", "Add a garment colour annotation");
  std::string ann_dataset, ann_image, ann_garment, ann_label, ann_author;
  bool ann_list = false;
  ann->add_option("--dataset", ann_dataset, "Dataset name")->required();
  ann->add_option("--image", ann_image, "Sample id");
  ann->add_option("--garment", ann_garment, "upper or lower");
  ann->add_option("--label", ann_label, "Free-text colour label");
  ann->add_option("--author", ann_author, "Annotator name");
  ann->add_flag("--list", ann_list, "Print label counts instead");

  // train
  auto* trn = app.add_subcommand("train", "Train a colour model");
  std::string trn_dataset, trn_label, trn_garment, trn_engine = "generative", trn_samples;
  std::size_t trn_k = 0;
  trn->add_option("--dataset", trn_dataset, "Dataset name")->required();
  trn->add_option("--label", trn_label, "Colour label")->required();
  trn->add_option("--garment", trn_garment, "upper or lower")->required();
  trn->add_option("--k", trn_k, "Number of positives (default: all)");
  trn->add_option("--engine", trn_engine, "generative or discriminative");
  trn->add_option("--samples", trn_samples, "Comma-separated positive sample ids");

  // query
  auto* qry = app.add_subcommand("query", "Rank a dataset against a text query");
  std::string qry_text, qry_dataset, qry_engine = "generative";
  std::size_t qry_top = 10;
  bool qry_json = false;
  qry->add_option("text", qry_text, "Query, e.g. \"blue jacket and black trousers\"")->required();
  qry->add_option("--dataset", qry_dataset, "Dataset name")->required();
  qry->add_option("--top", qry_top, "Number of results")->check(CLI::PositiveNumber);
  qry->add_option("--engine", qry_engine, "generative or discriminative");
  qry->add_flag("--json", qry_json, "Print the JSON response");

  // eval
  auto* evl = app.add_subcommand("eval", "Run an evaluation protocol");
  evl->require_subcommand(1);
  std::string ev_engine = "both", ev_k = "1,5,10,20", ev_out;
  std::vector<std::string> ev_queries;
  int ev_trials = 0;
  auto* rob = evl->add_subcommand("robustness", "Repeated random splits on one dataset");
  std::string rob_dataset;
  rob->add_option("--dataset", rob_dataset, "Dataset name")->required();
  auto* crs = evl->add_subcommand("cross", "Train on one dataset, rank others");
  std::string crs_train;
  std::vector<std::string> crs_tests;
  crs->add_option("--train", crs_train, "Training dataset")->required();
  crs->add_option("--test", crs_tests, "Test dataset (repeatable)")->required();
  auto* tim = evl->add_subcommand("timing", "Training and scoring cost against k");
  std::string tim_dataset;
  int tim_runs = 5;
  std::size_t tim_samples = 100;
  tim->add_option("--dataset", tim_dataset, "Dataset name")->required();
  tim->add_option("--runs", tim_runs, "Timed scoring runs after one warm-up")->check(CLI::PositiveNumber);
  tim->add_option("--samples", tim_samples, "Test samples scored per run")->check(CLI::PositiveNumber);
  for (auto* sub : {rob, crs, tim}) {
    sub->add_option("--query", ev_queries, "Single-garment query (repeatable)")->required();
    sub->add_option("--k", ev_k, "Comma-separated positives per model");
    sub->add_option("--engine", ev_engine, "generative, discriminative or both");
    sub->add_option("--trials", ev_trials, "Random splits per (query, k)");
    sub->add_option("--out", ev_out, "Also write the report files here");
  }

  // serve
  auto* srv = app.add_subcommand("serve", "Serve the /v1 HTTP API");
  int srv_port = -1;
  std::string srv_host;
  srv->add_option("--port", srv_port, "Port (default: config or 8080)");
  srv->add_option("--host", srv_host, "Bind address");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    err << "run with --help for usage\n";
    return 2;
  }

  try {
    EngineConfig cfg = config_file.empty() ? EngineConfig{} : load_config(config_file);
    apply_env_overrides(cfg);
    if (!data_dir.empty()) cfg.data_dir = data_dir;
    if (workers > 0) cfg.experiment.workers = workers;
    if (seed) {
      cfg.seed = *seed;
      cfg.experiment.split.seed = *seed;
      cfg.experiment.em.seed = *seed;
      cfg.experiment.svm.seed = *seed;
    }

    if (*gen) {
      if (seed) synth.seed = *seed;
      const auto truth = write_synthetic_dataset(gen_dir, synth, {gen_masks, gen_extra});
      out << "wrote " << truth.size() << " images to " << gen_dir << "\n";
      return 0;
    }

    Engine engine(cfg);

    if (*ing) {
      const fs::path src(ing_path);
      const std::string name = ing_name.empty() ? fs::absolute(src).lexically_normal().filename().string() : ing_name;
      if (ing_no_cache) fs::remove_all(fs::absolute(src) / "cache");
      auto ds = engine.register_dataset(name, src);
      std::size_t external = 0;
      for (const auto& s : ds->samples()) external += s.mask_provenance == "external";
      out << "dataset " << name << ": " << ds->samples().size() << " samples ("
          << external << " with external masks), " << ds->annotations().size() << " annotations\n";
      return 0;
    }

    if (*ann) {
      auto ds = engine.dataset(ann_dataset);
      if (ann_list) {
        for (const auto& [key, count] : list_labels(*ds)) {
          out << std::left << std::setw(6) << to_string(key.first) << " " << std::setw(20) << key.second
              << " " << count << "\n";
        }
        return 0;
      }
      if (ann_image.empty() || ann_garment.empty() || ann_label.empty()) {
        throw UsageError("annotate needs --image, --garment and --label (or --list)");
      }
      Annotation a;
      a.image_id = ann_image;
      try {
        a.garment = parse_garment(ann_garment);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      a.color_label = ann_label;
      a.author = ann_author;
      const bool added = engine.annotate(ann_dataset, a);
      out << (added ? "added" : "already present") << ": " << ann_image << " " << to_string(a.garment)
          << " " << normalize_label(ann_label) << "\n";
      return 0;
    }

    if (*trn) {
      TrainRequest req;
      req.dataset = trn_dataset;
      req.label = trn_label;
      try {
        req.garment = parse_garment(trn_garment);
        req.engine = parse_engine(trn_engine);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      req.k = trn_k;
      std::stringstream ss(trn_samples);
      for (std::string id; std::getline(ss, id, ',');) {
        if (!id.empty()) req.sample_ids.push_back(id);
      }
      const auto result = engine.train(req);
      out << result.model.id << (result.created ? "" : " (already trained)") << "\n";
      out << "  " << to_string(result.model.engine) << " " << result.model.label << " "
          << to_string(result.model.garment) << ", " << result.model.positives << " positives";
      if (result.model.negatives) out << ", " << result.model.negatives << " negatives";
      out << "\n";
      return 0;
    }

    if (*qry) {
      RetrievalRequest req;
      req.dataset = qry_dataset;
      req.text = qry_text;
      req.top_n = qry_top;
      try {
        req.engine = parse_engine(qry_engine);
      } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
      }
      RetrievalResponse resp;
      try {
        resp = engine.query(req);
      } catch (const UntrainedLabel& e) {
        err << "error: " << e.what() << "\n";
        err << "trained labels:";
        for (const auto& l : e.trained()) err << " [" << l << "]";
        err << "\n";
        return 1;
      } catch (const ServiceError& e) {
        if (e.code() == "parse_error") throw UsageError(e.what());
        throw;
      }
      if (qry_json) {
        out << to_json(resp).dump(2) << "\n";
        return 0;
      }
      out << "query: " << to_debug_string(resp.ast) << "\n";
      for (const auto& [leaf, id] : resp.model_ids) out << "model: " << leaf << " -> " << id << "\n";
      for (std::size_t i = 0; i < resp.ranked.size(); ++i) {
        const auto& r = resp.ranked[i];
        out << std::right << std::setw(4) << (i + 1) << "  " << std::left << std::setw(16) << r.id
            << " " << std::setprecision(6) << r.score << "\n";
      }
      return 0;
    }

    if (*evl) {
      auto ecfg = cfg.experiment;
      if (ev_trials > 0) ecfg.split.trials = ev_trials;
      const auto ks = parse_ks(ev_k);
      const auto engines = engines_for(ev_engine);
      std::vector<QueryTarget> queries;
      for (const auto& q : ev_queries) queries.push_back(single_leaf(q, engine.lexicon()));

      if (*tim) {
        auto ds = engine.dataset(tim_dataset);
        auto tcfg = ecfg;
        tcfg.workers = 1;
        for (const auto& q : queries) {
          for (auto e : engines) {
            const auto rep = run_timing(*ds, q, ks, e, tcfg, tim_runs, tim_samples);
            const auto id = engine.save_report("timing", to_json(rep),
                                               [&](const fs::path& d) { emit_report(rep, d); });
            if (!ev_out.empty()) emit_report(rep, fs::path(ev_out) / id);
            std::ifstream txt(engine.reports_dir() / id / "report.txt");
            out << txt.rdbuf() << "report: " << id << "\n";
          }
        }
        return 0;
      }

      EvalReport report;
      for (auto e : engines) {
        EvalReport part;
        if (*rob) {
          part = run_robustness(*engine.dataset(rob_dataset), queries, ks, e, ecfg);
        } else {
          std::vector<std::shared_ptr<Dataset>> keep;
          std::vector<const Dataset*> tests;
          for (const auto& t : crs_tests) {
            keep.push_back(engine.dataset(t));
            tests.push_back(keep.back().get());
          }
          part = run_cross_database(*engine.dataset(crs_train), tests, queries, ks, e, ecfg);
        }
        if (report.entries.empty()) {
          report = std::move(part);
        } else {
          for (auto& entry : part.entries) report.entries.push_back(std::move(entry));
        }
      }
      const auto id = engine.save_report(report.kind, to_json(report),
                                         [&](const fs::path& d) { emit_report(report, d); });
      if (!ev_out.empty()) emit_report(report, ev_out);
      out << format_table(report);
      for (const auto& e : report.entries) {
        if (!e.error.empty()) {
          err << "warning: " << e.query.label << " " << to_string(e.query.garment) << " k=" << e.k
              << ": " << e.error << "\n";
        }
      }
      out << "report: " << id << "\n";
      return 0;
    }

    if (*srv) {
      HttpService service(engine);
      const std::string host = srv_host.empty() ? cfg.host : srv_host;
      const int port = service.bind(host, srv_port >= 0 ? srv_port : cfg.port);
      if (port < 0) {
        err << "error: cannot bind " << host << ":" << (srv_port >= 0 ? srv_port : cfg.port) << "\n";
        return 1;
      }
      out << "serving /v1 on http://" << host << ":" << port << std::endl;
      g_service = &service;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      service.run();
      g_service = nullptr;
      return 0;
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace hq
