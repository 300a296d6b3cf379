#include <cstdlib>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "egfr/backend.hpp"

namespace egfr {

using json = nlohmann::json;

namespace {

std::string base64_encode(const std::vector<uint8_t>& data) {
  static const char* tbl =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((data.size() + 2) / 3 * 4);
  size_t i = 0;
  for (; i + 3 <= data.size(); i += 3) {
    uint32_t v = data[i] << 16 | data[i + 1] << 8 | data[i + 2];
    out.push_back(tbl[v >> 18]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(tbl[(v >> 6) & 63]);
    out.push_back(tbl[v & 63]);
  }
  if (i + 1 == data.size()) {
    uint32_t v = data[i] << 16;
    out.push_back(tbl[v >> 18]);
    out.push_back(tbl[(v >> 12) & 63]);
    out += "==";
  } else if (i + 2 == data.size()) {
    uint32_t v = data[i] << 16 | data[i + 1] << 8;
    out.push_back(tbl[v >> 18]);
    out.push_back(tbl[(v >> 12) & 63]);
    out.push_back(tbl[(v >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

// Splits "http(s)://host:port" from the path prefix.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  size_t path_start = endpoint.find(
      '/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  if (path_start == std::string::npos) return {endpoint, ""};
  return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

}  // namespace

Transport http_transport() {
  return [](const BackendConfig& cfg, const std::string& prompt_text,
            const std::vector<uint8_t>& png_bytes) -> std::string {
    if (cfg.endpoint.empty())
      throw ConfigError("remote backend '" + cfg.backend_id + "' has no endpoint");
    std::string api_key;
    if (!cfg.credential_env.empty()) {
      const char* v = std::getenv(cfg.credential_env.c_str());
      if (!v || !*v)
        throw CredentialError("environment variable '" + cfg.credential_env +
                              "' is not set for backend '" + cfg.backend_id + "'");
      api_key = v;
    }

    // Chat-completion request with one text part and one inline PNG part.
    json body = {
        {"model", cfg.model},
        {"messages",
         {{{"role", "user"},
           {"content",
            {{{"type", "text"}, {"text", prompt_text}},
             {{"type", "image_url"},
              {"image_url",
               {{"url", "data:image/png;base64," + base64_encode(png_bytes)}}}}}}}}}};
    if (cfg.temperature) body["temperature"] = *cfg.temperature;

    auto [host, path_prefix] = split_endpoint(cfg.endpoint);
    httplib::Client client(host);
    client.set_read_timeout(int(cfg.timeout_seconds), 0);
    client.set_connection_timeout(int(cfg.timeout_seconds), 0);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);

    std::string path = path_prefix.empty() ? "/v1/chat/completions" : path_prefix;
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res)
      throw TransportError("backend '" + cfg.backend_id + "': connection failed to " +
                           host);
    if (res->status == 401 || res->status == 403)
      throw CredentialError("backend '" + cfg.backend_id +
                            "': authentication failed (HTTP " +
                            std::to_string(res->status) + ")");
    if (res->status != 200)
      throw TransportError("backend '" + cfg.backend_id + "': HTTP " +
                           std::to_string(res->status));

    json reply = json::parse(res->body, nullptr, false);
    if (reply.is_discarded())
      throw TransportError("backend '" + cfg.backend_id +
                           "': response is not valid JSON");
    try {
      return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
      throw TransportError("backend '" + cfg.backend_id +
                           "': unexpected response shape");
    }
  };
}

}  // namespace egfr
