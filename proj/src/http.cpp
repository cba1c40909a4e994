#include "carbonwatch/http.hpp"

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "carbonwatch/errors.hpp"

namespace carbonwatch {

HttpResponse get_with_retries(HttpTransport& transport, const std::string& url,
                              const HttpOptions& options) {
  std::string last_error = "no attempt made";
  const int attempts = 1 + std::max(0, options.retries);
  for (int attempt = 0; attempt < attempts; ++attempt) {
    try {
      auto response = transport.get(url, options.timeout_s);
      if (response.status >= 200 && response.status < 300) return response;
      last_error = "HTTP status " + std::to_string(response.status);
      if (response.status < 500) break;
    } catch (const TransportError& e) {
      last_error = e.what();
    }
  }
  throw TransportError(url + ": " + last_error);
}

HttpResponse OfflineTransport::get(const std::string& url, double) {
  throw TransportError("network access disabled (" + url + ")");
}

void FixtureTransport::add(const std::string& url_pattern, HttpResponse response) {
  std::lock_guard lock(mutex_);
  rules_.push_back(Rule{std::regex(url_pattern), std::move(response), false});
}

void FixtureTransport::add_file(const std::string& url_pattern,
                                const std::filesystem::path& body_file, int status) {
  std::ifstream in(body_file, std::ios::binary);
  if (!in) throw Error("cannot open fixture " + body_file.string());
  std::ostringstream body;
  body << in.rdbuf();
  add(url_pattern, HttpResponse{status, body.str()});
}

void FixtureTransport::add_failure(const std::string& url_pattern) {
  std::lock_guard lock(mutex_);
  rules_.push_back(Rule{std::regex(url_pattern), {}, true});
}

std::shared_ptr<FixtureTransport> FixtureTransport::from_directory(
    const std::filesystem::path& dir) {
  std::ifstream in(dir / "fixtures.json");
  if (!in) throw Error("no fixtures.json in " + dir.string());
  auto manifest = nlohmann::json::parse(in);
  auto transport = std::make_shared<FixtureTransport>();
  for (const auto& rule : manifest) {
    const auto pattern = rule.at("match").get<std::string>();
    if (rule.value("fail", false)) {
      transport->add_failure(pattern);
    } else {
      transport->add_file(pattern, dir / rule.at("file").get<std::string>(),
                          rule.value("status", 200));
    }
  }
  return transport;
}

HttpResponse FixtureTransport::get(const std::string& url, double) {
  std::lock_guard lock(mutex_);
  requests_.push_back(url);
  for (const auto& rule : rules_) {
    if (std::regex_search(url, rule.pattern)) {
      if (rule.fail) throw TransportError("injected failure for " + url);
      return rule.response;
    }
  }
  throw TransportError("no fixture for " + url);
}

std::vector<std::string> FixtureTransport::requests() const {
  std::lock_guard lock(mutex_);
  return requests_;
}

std::size_t FixtureTransport::request_count(const std::string& url_pattern) const {
  std::lock_guard lock(mutex_);
  const std::regex re(url_pattern);
  std::size_t n = 0;
  for (const auto& url : requests_) n += std::regex_search(url, re) ? 1 : 0;
  return n;
}

}  // namespace carbonwatch
