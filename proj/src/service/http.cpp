#include <thread>

// Before httplib: <resolv.h> defines a `_res` macro that breaks Eigen.
#include "semdial/errors.hpp"
#include "semdial/service.hpp"

#include "httplib.h"

namespace semdial {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void send_json(httplib::Response& res, int status, const ordered_json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
  ordered_json body;
  body["error"]["code"] = code;
  body["error"]["message"] = message;
  send_json(res, status, body);
}

// An empty body counts as {}.
json parse_body(const httplib::Request& req) {
  if (req.body.find_first_not_of(" \t\r\n") == std::string::npos) return json::object();
  json j;
  try {
    j = json::parse(req.body);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("request body is not JSON: ") + e.what(), e.byte);
  }
  if (!j.is_object()) throw ValidationError("request body must be a JSON object");
  return j;
}

void reject_unknown(const json& body, std::initializer_list<std::string_view> allowed) {
  for (const auto& [key, _] : body.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError("unknown field '" + key + "'");
    }
  }
}

std::optional<std::uint64_t> optional_seed(const json& body) {
  if (!body.contains("seed") || body["seed"].is_null()) return std::nullopt;
  if (!body["seed"].is_number_unsigned()) throw ValidationError("seed must be a non-negative integer");
  return body["seed"].get<std::uint64_t>();
}

std::string required_text(const json& body) {
  if (!body.contains("text") || !body["text"].is_string()) throw ValidationError("field 'text' must be a string");
  return body["text"].get<std::string>();
}

// Runs `handler` and turns library errors into JSON error responses.
template <class F>
httplib::Server::Handler guarded(F handler) {
  return [handler](const httplib::Request& req, httplib::Response& res) {
    try {
      handler(req, res);
    } catch (const NoCheckpointError& e) {
      send_error(res, 503, "no_checkpoint", e.what());
    } catch (const NotFoundError& e) {
      send_error(res, 404, "not_found", e.what());
    } catch (const StateError& e) {
      send_error(res, 409, "state_error", e.what());
    } catch (const ParseError& e) {
      send_error(res, 400, "invalid_request", e.what());
    } catch (const ValidationError& e) {
      send_error(res, 400, "invalid_request", e.what());
    } catch (const json::exception& e) {
      send_error(res, 400, "invalid_request", e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal_error", e.what());
    }
  };
}

}  // namespace

struct HttpService::Impl {
  ServiceCore& core;
  std::string origin;
  httplib::Server server;
  std::thread thread;

  Impl(ServiceCore& c, std::string o) : core(c), origin(std::move(o)) { install(); }

  void install() {
    server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                {"Access-Control-Allow-Headers", "Content-Type"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/policy", guarded([this](const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, policy_to_json(core.default_policy()));
    }));

    server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      reject_unknown(body, {"policy", "context", "seed"});
      CreateSessionRequest r;
      if (body.contains("policy") && !body["policy"].is_null()) r.policy = policy_from_json(body["policy"]);
      if (body.contains("context")) r.context = body["context"].get<std::string>();
      r.seed = optional_seed(body);
      const auto id = core.create_session(r);
      ordered_json out;
      out["session_id"] = id;
      out["policy"] = policy_to_json(core.get_session(id).policy);
      send_json(res, 201, out);
    }));

    server.Get(R"(/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, session_to_json(core.get_session(req.matches[1])));
    }));

    server.Post(R"(/sessions/([^/]+)/message)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      reject_unknown(body, {"text"});
      send_json(res, 200, proposed_turn_to_json(core.post_message(req.matches[1], required_text(body))));
    }));

    server.Post(R"(/sessions/([^/]+)/generate)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      reject_unknown(body, {"plan_override", "seed"});
      std::optional<SemanticAnnotation> override_plan;
      if (body.contains("plan_override") && !body["plan_override"].is_null()) {
        if (!body["plan_override"].is_object()) throw ValidationError("plan_override must be an object");
        reject_unknown(body["plan_override"], {"emotions", "dialogue_acts", "topical_words"});
        override_plan = annotation_from_json(body["plan_override"]);
      }
      send_json(res, 200, trace_to_json(core.generate(req.matches[1], override_plan, optional_seed(body))));
    }));

    server.Post(R"(/sessions/([^/]+)/chat)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto body = parse_body(req);
      reject_unknown(body, {"text", "seed"});
      send_json(res, 200, trace_to_json(core.chat(req.matches[1], required_text(body), optional_seed(body))));
    }));

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) {
        send_error(res, res.status, res.status == 404 ? "not_found" : "invalid_request",
                   res.status == 404 ? "no such route" : "request rejected");
      }
    });
  }
};

HttpService::HttpService(ServiceCore& core, std::string cors_origin)
    : impl_(std::make_unique<Impl>(core, std::move(cors_origin))) {}

HttpService::~HttpService() { stop(); }

int HttpService::start(const std::string& host, int port) {
  int bound = port;
  if (port == 0) {
    bound = impl_->server.bind_to_any_port(host);
  } else if (!impl_->server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void HttpService::listen(const std::string& host, int port) {
  if (!impl_->server.listen(host, port)) throw IoError("cannot serve on " + host + ":" + std::to_string(port));
}

void HttpService::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace semdial
