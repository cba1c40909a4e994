#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <regex>
#include <string>
#include <vector>

namespace carbonwatch {

struct HttpResponse {
  int status = 0;
  std::string body;
};

struct HttpOptions {
  double timeout_s = 10.0;
  int retries = 2;
};

/// GET-only HTTP abstraction behind every provider client. Implementations
/// throw TransportError when no response was obtained.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse get(const std::string& url, double timeout_s) = 0;
};

/// Performs `get` up to 1 + retries times. Transport failures and 5xx
/// responses are retried; any final non-2xx status raises TransportError.
HttpResponse get_with_retries(HttpTransport& transport, const std::string& url,
                              const HttpOptions& options);

/// Live HTTPS transport.
class NetworkTransport final : public HttpTransport {
 public:
  HttpResponse get(const std::string& url, double timeout_s) override;
};

/// Always fails; used when networking is switched off.
class OfflineTransport final : public HttpTransport {
 public:
  HttpResponse get(const std::string& url, double timeout_s) override;
};

/// Serves recorded responses. Rules are regexes matched against the full URL
/// in insertion order. Thread-safe.
class FixtureTransport final : public HttpTransport {
 public:
  void add(const std::string& url_pattern, HttpResponse response);
  void add_file(const std::string& url_pattern, const std::filesystem::path& body_file,
                int status = 200);
  /// Matching requests throw TransportError.
  void add_failure(const std::string& url_pattern);

  /// Loads `<dir>/fixtures.json`: `[{"match": regex, "file": name, "status": 200}, ...]`,
  /// or `{"match": regex, "fail": true}` for a failing route.
  static std::shared_ptr<FixtureTransport> from_directory(const std::filesystem::path& dir);

  HttpResponse get(const std::string& url, double timeout_s) override;

  std::vector<std::string> requests() const;
  std::size_t request_count(const std::string& url_pattern) const;

 private:
  struct Rule {
    std::regex pattern;
    HttpResponse response;
    bool fail = false;
  };
  mutable std::mutex mutex_;
  std::vector<Rule> rules_;
  std::vector<std::string> requests_;
};

}  // namespace carbonwatch
