#include "huequery/http.hpp"

#include <fstream>
#include <sstream>

#include "httplib.h"

namespace fs = std::filesystem;

namespace hq {

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message, nlohmann::json extra = nlohmann::json::object()) {
  extra["code"] = code;
  extra["message"] = message;
  send_json(res, status, extra);
}

nlohmann::json parse_body(const httplib::Request& req) {
  auto j = nlohmann::json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ServiceError(400, "bad_request", "request body must be a JSON object");
  }
  return j;
}

template <typename T>
T field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ServiceError(400, "bad_request", std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ServiceError(400, "bad_request", std::string("field '") + key + "' has the wrong type");
  }
}

Garment garment_field(const nlohmann::json& j) {
  try {
    return parse_garment(field<std::string>(j, "garment"));
  } catch (const std::invalid_argument& e) {
    throw ServiceError(422, "invalid_garment", e.what());
  }
}

EngineKind engine_field(const nlohmann::json& j) {
  try {
    return parse_engine(j.value("engine", std::string("generative")));
  } catch (const std::invalid_argument& e) {
    throw ServiceError(422, "invalid_engine", e.what());
  }
}

std::string content_type(const fs::path& p) {
  auto ext = p.extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".bmp") return "image/bmp";
  return "application/octet-stream";
}

nlohmann::json job_json(const JobStatus& s) {
  nlohmann::json j = {{"id", s.id}, {"kind", s.kind}, {"state", to_string(s.state)}};
  if (s.state == JobState::done) j["result"] = s.result;
  if (s.state == JobState::failed) {
    j["error"] = {{"status", s.error_status}, {"message", s.error}};
  }
  return j;
}

}  // namespace

struct HttpService::Impl {
  Engine& engine;
  httplib::Server server;

  explicit Impl(Engine& e) : engine(e) { routes(); }

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static Handler guarded(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const UntrainedLabel& e) {
        send_error(res, e.status(), e.code(), e.what(), {{"trained_labels", e.trained()}});
      } catch (const ServiceError& e) {
        send_error(res, e.status(), e.code(), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "internal", e.what());
      }
    };
  }

  void routes() {
    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (res.body.empty()) {
        send_error(res, res.status, res.status == 404 ? "not_found" : "error",
                   "no route for " + req.method + " " + req.path);
      }
    });

    server.Get("/v1/health", guarded([](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, {{"status", "ok"}});
    }));

    server.Get("/v1/datasets", guarded([this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& name : engine.dataset_names()) {
        auto ds = engine.dataset(name);
        auto lock = engine.read_lock();
        nlohmann::json labels = nlohmann::json::array();
        for (const auto& [key, count] : list_labels(*ds)) {
          labels.push_back({{"garment", to_string(key.first)}, {"label", key.second}, {"count", count}});
        }
        out.push_back({{"name", name},
                       {"samples", ds->samples().size()},
                       {"annotations", ds->annotations().size()},
                       {"labels", labels}});
      }
      send_json(res, 200, {{"datasets", out}});
    }));

    server.Post("/v1/datasets/:name/annotations",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto& name = req.path_params.at("name");
      const auto body = parse_body(req);
      std::vector<nlohmann::json> items;
      if (body.contains("annotations")) {
        for (const auto& a : body.at("annotations")) items.push_back(a);
      } else {
        items.push_back(body);
      }
      nlohmann::json results = nlohmann::json::array();
      bool any_added = false;
      for (const auto& item : items) {
        Annotation a;
        a.image_id = field<std::string>(item, "image_id");
        a.garment = garment_field(item);
        a.color_label = field<std::string>(item, "label");
        a.author = item.value("author", std::string());
        a.timestamp = item.value("timestamp", std::string());
        const bool added = engine.annotate(name, a);
        any_added = any_added || added;
        results.push_back({{"image_id", a.image_id},
                           {"garment", to_string(a.garment)},
                           {"label", normalize_label(a.color_label)},
                           {"added", added}});
      }
      send_json(res, any_added ? 201 : 200, {{"dataset", name}, {"results", results}});
    }));

    server.Get("/v1/datasets/:name/samples",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto& name = req.path_params.at("name");
      auto ds = engine.dataset(name);
      std::optional<Garment> garment;
      if (req.has_param("garment")) {
        try {
          garment = parse_garment(req.get_param_value("garment"));
        } catch (const std::invalid_argument& e) {
          throw ServiceError(422, "invalid_garment", e.what());
        }
      }
      const std::string label = req.get_param_value("unlabeled_for");
      std::size_t offset = 0, limit = std::numeric_limits<std::size_t>::max();
      try {
        if (req.has_param("offset")) offset = std::stoul(req.get_param_value("offset"));
        if (req.has_param("limit")) limit = std::stoul(req.get_param_value("limit"));
      } catch (const std::exception&) {
        throw ServiceError(400, "bad_request", "offset and limit must be non-negative integers");
      }
      auto lock = engine.read_lock();
      const auto picked = engine.unlabeled(*ds, label, garment);
      nlohmann::json samples = nlohmann::json::array();
      for (std::size_t i = offset; i < picked.size() && samples.size() < limit; ++i) {
        const Sample* s = picked[i];
        nlohmann::json labels = {{"upper", nlohmann::json::array()}, {"lower", nlohmann::json::array()}};
        for (const auto& a : ds->annotations()) {
          if (a.image_id == s->id) labels[to_string(a.garment)].push_back(a.color_label);
        }
        samples.push_back({{"id", s->id},
                           {"image", "/v1/samples/" + s->id + "/image?dataset=" + name},
                           {"labels", labels},
                           {"mask_provenance", s->mask_provenance},
                           {"pixels", {{"upper", s->upper.size()}, {"lower", s->lower.size()}}}});
      }
      send_json(res, 200, {{"dataset", name}, {"total", picked.size()}, {"samples", samples}});
    }));

    server.Post("/v1/models/train", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      TrainRequest tr;
      tr.dataset = field<std::string>(body, "dataset");
      tr.label = field<std::string>(body, "label");
      tr.garment = garment_field(body);
      tr.engine = engine_field(body);
      tr.sample_ids = body.value("sample_ids", std::vector<std::string>{});
      tr.negative_ids = body.value("negative_ids", std::vector<std::string>{});
      tr.k = body.value("k", std::size_t{0});
      if (body.contains("seed")) tr.seed = body.at("seed").get<std::uint64_t>();
      if (tr.engine == EngineKind::generative && !tr.negative_ids.empty()) {
        throw ServiceError(422, "negatives_rejected", "the generative engine trains on positives only");
      }
      engine.dataset(tr.dataset);  // 404 before queuing
      auto run = [this, tr] {
        const auto result = engine.train(tr);
        auto j = to_json(result.model);
        j["created_now"] = result.created;
        return j;
      };
      if (body.value("wait", false)) {
        send_json(res, 201, run());
        return;
      }
      const auto id = engine.jobs().submit("train", run);
      send_json(res, 202, {{"job_id", id}, {"status_url", "/v1/jobs/" + id}});
    }));

    server.Get("/v1/jobs/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto status = engine.jobs().status(req.path_params.at("id"));
      if (!status) throw ServiceError(404, "not_found", "no job '" + req.path_params.at("id") + "'");
      send_json(res, 200, job_json(*status));
    }));

    server.Get("/v1/models", guarded([this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json out = nlohmann::json::array();
      for (const auto& r : engine.models().list()) {
        if (req.has_param("label") && r.label != req.get_param_value("label")) continue;
        if (req.has_param("garment") && to_string(r.garment) != req.get_param_value("garment")) continue;
        if (req.has_param("engine") && to_string(r.engine) != req.get_param_value("engine")) continue;
        out.push_back(to_json(r));
      }
      send_json(res, 200, {{"models", out}});
    }));

    server.Get("/v1/models/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, engine.models().read(req.path_params.at("id")));
    }));

    server.Post("/v1/query", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      RetrievalRequest rr;
      rr.dataset = field<std::string>(body, "dataset");
      rr.engine = engine_field(body);
      const auto top = body.value("top_n", 10LL);
      if (top < 1) throw ServiceError(422, "invalid_request", "top_n must be at least 1");
      rr.top_n = static_cast<std::size_t>(top);
      if (body.contains("query") && body.at("query").is_object()) {
        try {
          rr.ast = ast_from_json(body.at("query"));
        } catch (const std::exception& e) {
          throw ServiceError(422, "parse_error", e.what());
        }
      } else {
        rr.text = body.contains("text") ? field<std::string>(body, "text") : field<std::string>(body, "query");
      }
      send_json(res, 200, to_json(engine.query(rr)));
    }));

    server.Get("/v1/samples/:id/image", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto path = engine.sample_image(req.path_params.at("id"), req.get_param_value("dataset"));
      std::ifstream in(path, std::ios::binary);
      if (!in) throw ServiceError(404, "not_found", "image file missing for " + req.path_params.at("id"));
      std::stringstream ss;
      ss << in.rdbuf();
      res.status = 200;
      res.set_content(ss.str(), content_type(path));
    }));

    server.Get("/v1/eval/reports", guarded([this](const httplib::Request&, httplib::Response& res) {
      std::vector<std::string> ids;
      if (fs::is_directory(engine.reports_dir())) {
        for (const auto& e : fs::directory_iterator(engine.reports_dir())) {
          if (fs::exists(e.path() / "report.json")) ids.push_back(e.path().filename().string());
        }
      }
      std::sort(ids.begin(), ids.end());
      send_json(res, 200, {{"reports", ids}});
    }));

    server.Get("/v1/eval/reports/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, engine.report(req.path_params.at("id")));
    }));
  }
};

HttpService::HttpService(Engine& engine) : impl_(std::make_unique<Impl>(engine)) {}
HttpService::~HttpService() = default;

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) return impl_->server.bind_to_any_port(host);
  return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpService::run() { return impl_->server.listen_after_bind(); }

void HttpService::stop() { impl_->server.stop(); }

}  // namespace hq
