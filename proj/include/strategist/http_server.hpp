#pragma once

#include <memory>
#include <string>

// Eigen must be parsed before httplib: <resolv.h> defines an `_res` macro.
#include "strategist/service.hpp"

#include <httplib.h>
#include <json.hpp>

namespace strategist {

inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::unknown_id: return 404;
    case ErrorCode::conflict: return 409;
    default: return 400;
  }
}

inline nlohmann::json error_body(ErrorCode code, const std::string& message, const std::string& detail) {
  return {{"code", to_string(code)}, {"message", message}, {"detail", detail}};
}

/// Routes of the session API bound to `service`, which must outlive the
/// returned server.
inline std::unique_ptr<httplib::Server> make_server(SessionService& service) {
  auto server = std::make_unique<httplib::Server>();
  using Req = httplib::Request;
  using Res = httplib::Response;

  auto reply = [](Res& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  };
  auto parse_body = [](const Req& req) {
    if (req.body.empty()) return nlohmann::json::object();
    try {
      auto j = nlohmann::json::parse(req.body);
      if (!j.is_object()) throw Error(ErrorCode::malformed_document, "request body must be a JSON object");
      return j;
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorCode::malformed_document, std::string("request body is not valid JSON: ") + e.what());
    }
  };
  // Wraps a handler so library errors map to {code, message, detail}.
  auto guarded = [reply](auto fn) {
    return [reply, fn](const Req& req, Res& res) {
      try {
        fn(req, res);
      } catch (const Error& e) {
        reply(res, http_status(e.code()), error_body(e.code(), e.what(), e.detail()));
      } catch (const nlohmann::json::exception& e) {
        reply(res, 400, error_body(ErrorCode::malformed_document, e.what(), ""));
      } catch (const std::exception& e) {
        reply(res, 500, {{"code", "internal"}, {"message", e.what()}, {"detail", ""}});
      }
    };
  };

  server->set_default_headers({{"Access-Control-Allow-Origin", "*"},
                               {"Access-Control-Allow-Headers", "Content-Type"},
                               {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server->Options(R"(.*)", [](const Req&, Res& res) { res.status = 204; });

  server->Post("/sessions", guarded([&service, reply, parse_body](const Req& req, Res& res) {
                 const auto body = parse_body(req);
                 if (!body.contains("objective") || !body["objective"].is_string()) {
                   std::string names;
                   for (const auto& n : service.registry().names()) names += (names.empty() ? "" : ", ") + n;
                   throw Error(ErrorCode::invalid_argument, "objective is required; available: " + names, names);
                 }
                 const auto seed = body.value("seed", std::uint64_t{0});
                 reply(res, 201, service.create_session(body["objective"].get<std::string>(), seed));
               }));

  server->Post(R"(/sessions/([^/]+)/evaluate)", guarded([&service, reply, parse_body](const Req& req, Res& res) {
                 const auto body = parse_body(req);
                 if (!body.contains("x")) throw Error(ErrorCode::invalid_argument, "x is required", "x");
                 reply(res, 200, service.evaluate(req.matches[1], detail::vector_from_json(body["x"], "x")));
               }));

  server->Get(R"(/sessions/([^/]+))", guarded([&service, reply](const Req& req, Res& res) {
                reply(res, 200, service.get_state(req.matches[1]));
              }));

  server->Post(R"(/sessions/([^/]+)/ibo)", guarded([&service, reply, parse_body](const Req& req, Res& res) {
                 const auto body = parse_body(req);
                 const std::string mode = body.value("mode", std::string("grid"));
                 const nlohmann::json overrides = body.contains("overrides") ? body["overrides"] : nlohmann::json();
                 reply(res, 200, service.run_ibo(req.matches[1], mode, overrides));
               }));

  server->Post(R"(/sessions/([^/]+)/continue)", guarded([&service, reply, parse_body](const Req& req, Res& res) {
                 const auto body = parse_body(req);
                 if (!body.contains("estimate_id") || !body["estimate_id"].is_string()) {
                   throw Error(ErrorCode::invalid_argument, "estimate_id is required", "estimate_id");
                 }
                 SessionService::ContinueOptions opt;
                 if (body.contains("prefix")) opt.prefix = detail::count_field(body, "prefix", 0);
                 opt.n_starts = static_cast<int>(detail::count_field(body, "n_starts", 100));
                 opt.ei_tolerance = detail::number_field(body, "ei_tolerance", opt.ei_tolerance);
                 const auto iterations = detail::count_field(body, "iterations", 50);
                 reply(res, 202,
                       service.continue_bo(req.matches[1], body["estimate_id"].get<std::string>(), iterations, opt));
               }));

  server->Get(R"(/runs/([^/]+))", guarded([&service, reply](const Req& req, Res& res) {
                reply(res, 200, service.get_run(req.matches[1]));
              }));

  server->set_error_handler([reply](const Req&, Res& res) {
    if (res.body.empty()) {
      const int status = res.status;
      reply(res, status, {{"code", "not_found"}, {"message", "no such route"}, {"detail", ""}});
    }
  });
  return server;
}

}  // namespace strategist
