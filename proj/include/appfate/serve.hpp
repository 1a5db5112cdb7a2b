#pragma once

// Prediction service over a loaded BagModel: request parsing, the /v1/*
// handlers, hot model swap, and the cpp-httplib binding.
//
// Requests are flat JSON objects keyed by raw record attribute names
// (the input CSV columns, minus status checks and manifest_source) plus
// manifest inputs: manifest_xml, permissions, receiver_actions,
// permission_groups, action_groups. The developer variant does not accept
// post-deployment attributes.

#include <algorithm>
#include <memory>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "appfate/ensemble.hpp"
#include "appfate/features.hpp"
#include "appfate/ingest.hpp"
#include "appfate/manifest.hpp"
#include "httplib.h"

namespace appfate::serve {

struct RequestError : std::runtime_error {
  RequestError(int status, std::string code, const std::string& message)
      : std::runtime_error(message), status(status), code(std::move(code)) {}
  int status;
  std::string code;
};

inline constexpr std::array<std::string_view, 5> kManifestFields = {
    "manifest_xml", "permissions", "receiver_actions", "permission_groups", "action_groups"};

// Kind of value an attribute takes, for clients building forms.
inline std::string_view attribute_type(std::string_view name) {
  if (name == "last_updated") return "date";
  if (name == "downloads") return "downloads";
  if (name == "reviews_average" || name == "price") return "number";
  if (name == "ratings" || name.ends_with("_star_ratings")) return "integer";
  if (name == "genre" || name == "content_rating" || name == "android_version" || name == "current_version") {
    return "category";
  }
  return "text";
}

// Record attributes a model of this variant accepts, in column order.
inline std::vector<std::string> accepted_attributes(Variant variant) {
  std::vector<std::string> out;
  for (auto c : kColumns) {
    if (c.starts_with("status_") || c == "manifest_source") continue;
    if (variant == Variant::Developer &&
        std::find(kPostDeploymentAttributes.begin(), kPostDeploymentAttributes.end(), c) !=
            kPostDeploymentAttributes.end()) {
      continue;
    }
    out.emplace_back(c);
  }
  return out;
}

inline bool accepts(Variant variant, std::string_view key) {
  const auto attrs = accepted_attributes(variant);
  return std::find(attrs.begin(), attrs.end(), key) != attrs.end() ||
         std::find(kManifestFields.begin(), kManifestFields.end(), key) != kManifestFields.end();
}

namespace detail {

[[noreturn]] inline void bad(const std::string& message) { throw RequestError(400, "bad_request", message); }

inline std::string as_text(const Json& v, const std::string& key) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number()) return appfate::detail::format_real(v.get<double>());
  bad(key + ": expected a string or number");
}

inline std::int64_t as_count(const Json& v, const std::string& key) {
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0) return v.get<std::int64_t>();
  if (v.is_string()) {
    if (auto n = appfate::detail::parse_count(v.get<std::string>())) return *n;
  }
  bad(key + ": expected a non-negative integer");
}

inline double as_real(const Json& v, const std::string& key) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    if (auto n = appfate::detail::parse_real(v.get<std::string>())) return *n;
  }
  bad(key + ": expected a number");
}

inline void set_attribute(RawAppRecord& r, const std::string& key, const Json& v) {
  if (v.is_null()) return;
  if (key == "description") {
    r.description = as_text(v, key);
  } else if (key == "title") {
    r.title = as_text(v, key);
  } else if (key == "last_updated") {
    r.last_updated = parse_date(as_text(v, key));
    if (!r.last_updated) bad("last_updated: unrecognized date");
  } else if (key == "whats_new") {
    r.whats_new = as_text(v, key);
  } else if (key == "reviews_average") {
    r.reviews_average = as_real(v, key);
  } else if (key == "price") {
    r.price = as_real(v, key);
  } else if (key == "ratings") {
    r.ratings = as_count(v, key);
  } else if (key.ends_with("_star_ratings")) {
    static constexpr std::string_view kStars[] = {"one", "two", "three", "four", "five"};
    for (std::size_t s = 0; s < 5; ++s) {
      if (key.starts_with(kStars[s])) r.star_ratings[s] = as_count(v, key);
    }
  } else if (key == "privacy_policy_link") {
    r.privacy_policy_link = as_text(v, key);
  } else if (key == "genre") {
    r.genre = as_text(v, key);
  } else if (key == "content_rating") {
    r.content_rating = as_text(v, key);
  } else if (key == "current_version") {
    r.current_version = as_text(v, key);
  } else if (key == "android_version") {
    r.android_version = as_text(v, key);
  } else if (key == "developer_email") {
    r.developer_email = as_text(v, key);
  } else if (key == "developer_website") {
    r.developer_website = as_text(v, key);
  } else if (key == "developer_name") {
    r.developer_name = as_text(v, key);
  } else if (key == "developer_address") {
    r.developer_address = as_text(v, key);
  } else if (key == "file_size") {
    r.file_size = as_text(v, key);
  } else if (key == "downloads") {
    const auto text = as_text(v, key);
    r.downloads = appfate::detail::parse_downloads(text);
    if (!r.downloads) bad("downloads: unrecognized range");
  }
}

inline std::set<std::string> string_set(const Json& v, const std::string& key) {
  if (!v.is_array()) bad(key + ": expected an array of strings");
  std::set<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) bad(key + ": expected an array of strings");
    out.insert(e.get<std::string>());
  }
  return out;
}

// Group names from ["Contacts", ...] or {"Contacts": true, ...}.
template <std::size_t N>
void set_groups(std::array<std::uint8_t, N>& flags, const std::array<std::string_view, N>& names, const Json& v,
                const std::string& key) {
  auto set = [&](const std::string& name, bool on) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw RequestError(400, "unknown_attribute", key + ": unknown group '" + name + "'");
    auto& f = flags[std::size_t(it - names.begin())];
    f = std::uint8_t(f | (on ? 1 : 0));
  };
  if (v.is_array()) {
    for (const auto& e : v) {
      if (!e.is_string()) bad(key + ": expected group names");
      set(e.get<std::string>(), true);
    }
  } else if (v.is_object()) {
    for (const auto& [name, on] : v.items()) {
      if (!on.is_boolean() && !on.is_number_integer()) bad(key + ": expected boolean flags");
      set(name, on.is_boolean() ? on.template get<bool>() : on.template get<int>() != 0);
    }
  } else if (!v.is_null()) {
    bad(key + ": expected an array or object of group names");
  }
}

}  // namespace detail

struct AppRequest {
  RawAppRecord record;
  ManifestGroups groups;
};

// Manifest XML, identifier lists and explicit group flags all contribute;
// a group is set when any of them sets it.
inline AppRequest parse_app_request(const Json& body, Variant variant) {
  if (!body.is_object()) detail::bad("request body must be a JSON object");
  AppRequest req;
  std::set<std::string> permissions, actions;
  for (const auto& [key, value] : body.items()) {
    if (!accepts(variant, key)) {
      throw RequestError(400, "unknown_attribute", "unknown attribute '" + key + "' for the " +
                                                       std::string(to_string(variant)) + " model");
    }
    if (key == "manifest_xml") {
      if (value.is_null()) continue;
      if (!value.is_string()) detail::bad("manifest_xml: expected a string");
      ManifestInfo m;
      try {
        m = parse_manifest_xml(value.get<std::string>());
      } catch (const ManifestParseError& e) {
        throw RequestError(422, "bad_manifest", e.what());
      }
      permissions.insert(m.permissions.begin(), m.permissions.end());
      actions.insert(m.receiver_actions.begin(), m.receiver_actions.end());
    } else if (key == "permissions") {
      if (value.is_null()) continue;
      const auto s = detail::string_set(value, key);
      permissions.insert(s.begin(), s.end());
    } else if (key == "receiver_actions") {
      if (value.is_null()) continue;
      const auto s = detail::string_set(value, key);
      actions.insert(s.begin(), s.end());
    } else if (key != "permission_groups" && key != "action_groups") {
      detail::set_attribute(req.record, key, value);
    }
  }
  req.groups.permissions = group_permissions(permissions);
  req.groups.actions = group_actions(actions);
  if (body.contains("permission_groups")) {
    detail::set_groups(req.groups.permissions.flags, kPermissionGroupNames, body["permission_groups"],
                       "permission_groups");
  }
  if (body.contains("action_groups")) {
    detail::set_groups(req.groups.actions.flags, kActionGroupNames, body["action_groups"], "action_groups");
  }
  return req;
}

// A loaded model plus what every request needs from it.
struct LoadedModel {
  BagModel model;
  std::string version;
  std::vector<NamedScore> importance;

  explicit LoadedModel(BagModel m)
      : model(std::move(m)), version(model_version(model)), importance(aggregate_importance(model)) {}
};

struct Response {
  int status = 200;
  Json body;
};

class Service {
 public:
  explicit Service(std::string model_path = {}, std::size_t top_k = 10)
      : model_path_(std::move(model_path)), top_k_(top_k) {}

  // Loads (or re-reads) the configured model file. On failure the current
  // model stays in place and the error propagates.
  void reload() {
    if (model_path_.empty()) throw DataError("no model path configured");
    set_model(load_file(model_path_));
  }

  void set_model(BagModel model) {
    auto next = std::make_shared<const LoadedModel>(std::move(model));
    std::lock_guard lock(mutex_);
    current_ = std::move(next);
  }

  std::shared_ptr<const LoadedModel> model() const {
    std::lock_guard lock(mutex_);
    return current_;
  }

  const std::string& model_path() const { return model_path_; }

  // Safe to call concurrently; a reload swaps the model between requests.
  Response handle(std::string_view method, std::string_view path, std::string_view body) {
    try {
      if (path == "/v1/health" && method == "GET") return health();
      if (path == "/v1/admin/reload" && method == "POST") return admin_reload();
      const bool known = path == "/v1/predict" || path == "/v1/whatif" || path == "/v1/importance" ||
                         path == "/v1/schema" || path == "/v1/health" || path == "/v1/admin/reload";
      if (!known) return error(404, "not_found", "no such endpoint: " + std::string(path));
      const bool post = path == "/v1/predict" || path == "/v1/whatif" || path == "/v1/admin/reload";
      if (method != (post ? "POST" : "GET")) {
        return error(405, "method_not_allowed", std::string(method) + " not allowed on " + std::string(path));
      }
      const auto loaded = model();
      if (!loaded) return error(503, "no_model", "no model loaded");
      if (path == "/v1/importance") return importance(*loaded);
      if (path == "/v1/schema") return schema(*loaded);
      const auto json = parse_body(body);
      if (path == "/v1/predict") return predict(*loaded, json);
      return whatif(*loaded, json);
    } catch (const RequestError& e) {
      return error(e.status, e.code, e.what());
    } catch (const std::exception& e) {
      return error(500, "internal", e.what());
    }
  }

  double score(const LoadedModel& m, const AppRequest& req) const {
    return predict_score(m.model, m.model.featurizer(req.record, req.groups));
  }

 private:
  static Response error(int status, const std::string& code, const std::string& message) {
    return {status, {{"error", code}, {"message", message}}};
  }

  static Json parse_body(std::string_view body) {
    if (appfate::detail::trim(body).empty()) detail::bad("empty request body");
    try {
      return Json::parse(body);
    } catch (const Json::parse_error& e) {
      detail::bad(std::string("malformed JSON: ") + e.what());
    }
  }

  Json top_importance(const LoadedModel& m) const {
    Json out = Json::array();
    for (std::size_t i = 0; i < m.importance.size() && i < top_k_; ++i) {
      out.push_back({{"feature", m.importance[i].name}, {"score", m.importance[i].score}});
    }
    return out;
  }

  Response health() const {
    const auto loaded = model();
    if (!loaded) return {200, {{"status", "no_model"}}};
    return {200, {{"status", "ok"}, {"model_version", loaded->version}}};
  }

  Response admin_reload() {
    try {
      reload();
    } catch (const std::exception& e) {
      return error(500, "reload_failed", e.what());
    }
    return health();
  }

  Response predict(const LoadedModel& m, const Json& body) const {
    const auto req = parse_app_request(body, m.model.schema().variant());
    const double s = score(m, req);
    const double t = m.model.operating_threshold();
    return {200,
            {{"score", s},
             {"label", to_string(classify(s, t))},
             {"threshold", t},
             {"top_importance", top_importance(m)},
             {"model_version", m.version}}};
  }

  Response whatif(const LoadedModel& m, const Json& body) const {
    if (!body.is_object() || !body.contains("base")) detail::bad("what-if request needs a 'base' object");
    const auto variant = m.model.schema().variant();
    const Json& base = body["base"];
    const double base_score = score(m, parse_app_request(base, variant));
    Json results = Json::array();
    if (body.contains("mutations")) {
      const Json& mutations = body["mutations"];
      if (!mutations.is_array()) detail::bad("mutations: expected an array");
      for (const auto& mu : mutations) {
        if (!mu.is_object() || !mu.contains("attribute") || !mu["attribute"].is_string()) {
          detail::bad("each mutation needs an 'attribute' name and a 'value'");
        }
        const auto attr = mu["attribute"].get<std::string>();
        if (!accepts(variant, attr)) {
          throw RequestError(400, "unknown_attribute", "unknown mutated attribute '" + attr + "'");
        }
        Json changed = base;
        changed[attr] = mu.contains("value") ? mu["value"] : Json(nullptr);
        const double s = score(m, parse_app_request(changed, variant));
        results.push_back({{"mutation", mu}, {"score", s}, {"delta", s - base_score}});
      }
    }
    return {200, {{"base_score", base_score}, {"results", std::move(results)}, {"model_version", m.version}}};
  }

  Response importance(const LoadedModel& m) const {
    Json out = Json::array();
    for (const auto& e : m.importance) out.push_back({{"feature", e.name}, {"score", e.score}});
    return {200, {{"importance", std::move(out)}, {"model_version", m.version}}};
  }

  Response schema(const LoadedModel& m) const {
    const auto& s = m.model.schema();
    Json attrs = Json::array();
    for (const auto& a : accepted_attributes(s.variant())) {
      attrs.push_back({{"name", a}, {"type", attribute_type(a)}});
    }
    Json vocab = Json::object();
    for (const auto& [name, v] : s.vocabularies()) vocab[name] = v;
    Json manifest = Json::array();
    for (auto f : kManifestFields) manifest.push_back(f);
    return {200,
            {{"variant", to_string(s.variant())},
             {"attributes", std::move(attrs)},
             {"manifest_fields", std::move(manifest)},
             {"permission_groups", kPermissionGroupNames},
             {"action_groups", kActionGroupNames},
             {"vocabularies", std::move(vocab)},
             {"feature_names", s.feature_names()},
             {"threshold", m.model.operating_threshold()},
             {"model_version", m.version}}};
  }

  std::string model_path_;
  std::size_t top_k_;
  mutable std::mutex mutex_;
  std::shared_ptr<const LoadedModel> current_;
};

// Routes every /v1/* request through Service::handle.
inline void bind(httplib::Server& server, Service& service) {
  auto dispatch = [&service](const httplib::Request& req, httplib::Response& res) {
    const auto out = service.handle(req.method, req.path, req.body);
    res.status = out.status;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_content(out.body.dump(), "application/json");
  };
  server.Get(R"(/v1/.*)", dispatch);
  server.Post(R"(/v1/.*)", dispatch);
  server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.status = 204;
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
  });
}

}  // namespace appfate::serve
