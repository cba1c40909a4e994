#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <regex>

#include "carbonwatch/errors.hpp"
#include "carbonwatch/http.hpp"

namespace carbonwatch {

HttpResponse NetworkTransport::get(const std::string& url, double timeout_s) {
  static const std::regex url_re(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, url_re)) throw TransportError("malformed URL " + url);
  const std::string path = m[2].matched ? m[2].str() : "/";

  httplib::Client client(m[1].str());
  const auto sec = static_cast<time_t>(timeout_s);
  const auto usec = static_cast<time_t>((timeout_s - static_cast<double>(sec)) * 1e6);
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_follow_location(true);
  auto result = client.Get(path, httplib::Headers{{"Accept", "application/json"}});
  if (!result) throw TransportError(url + ": " + httplib::to_string(result.error()));
  return HttpResponse{result->status, result->body};
}

}  // namespace carbonwatch
