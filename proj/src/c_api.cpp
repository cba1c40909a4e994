#include "carbonwatch/c_api.h"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>

#include "carbonwatch/config.hpp"
#include "carbonwatch/errors.hpp"
#include "carbonwatch/session_log.hpp"
#include "carbonwatch/tracker.hpp"
#include "carbonwatch/version.hpp"

struct cw_tracker {
  std::unique_ptr<carbonwatch::Tracker> impl;
};

namespace {

void write_error(char* err, size_t errlen, const std::string& message) {
  if (!err || errlen == 0) return;
  const size_t n = std::min(errlen - 1, message.size());
  std::memcpy(err, message.data(), n);
  err[n] = '\0';
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) return nullptr;
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

cw_tracker* cw_tracker_create(const char* config_json, char* err, size_t errlen) {
  try {
    using namespace carbonwatch;
    TrackerConfig config;
    if (auto path = default_config_path()) config = load_config_file(*path, config);
    apply_env_overrides(config);
    if (config_json && *config_json) {
      config = config_from_json(nlohmann::json::parse(config_json), config);
    }
    auto handle = std::make_unique<cw_tracker>();
    handle->impl = std::make_unique<Tracker>(std::move(config));
    return handle.release();
  } catch (const std::exception& e) {
    write_error(err, errlen, e.what());
  } catch (...) {
    write_error(err, errlen, "unknown error");
  }
  return nullptr;
}

void cw_tracker_epoch_start(cw_tracker* tracker) {
  if (tracker) tracker->impl->epoch_start();
}

void cw_tracker_epoch_end(cw_tracker* tracker) {
  if (tracker) tracker->impl->epoch_end();
}

void cw_tracker_stop(cw_tracker* tracker) {
  if (tracker) tracker->impl->stop();
}

void cw_tracker_destroy(cw_tracker* tracker) {
  try {
    delete tracker;
  } catch (...) {
  }
}

const char* cw_tracker_phase(const cw_tracker* tracker) {
  if (!tracker) return "stopped";
  return carbonwatch::to_string(tracker->impl->phase());
}

int cw_tracker_epochs_completed(const cw_tracker* tracker) {
  return tracker ? tracker->impl->epochs_completed() : 0;
}

char* cw_tracker_prediction_json(const cw_tracker* tracker) {
  try {
    if (!tracker) return nullptr;
    auto p = tracker->impl->prediction();
    if (!p) return nullptr;
    return duplicate(carbonwatch::to_json(*p).dump());
  } catch (...) {
    return nullptr;
  }
}

char* cw_tracker_summary_json(const cw_tracker* tracker) {
  try {
    if (!tracker) return nullptr;
    auto s = tracker->impl->summary();
    if (!s) return nullptr;
    return duplicate(carbonwatch::to_json(*s).dump());
  } catch (...) {
    return nullptr;
  }
}

char* cw_tracker_log_path(const cw_tracker* tracker) {
  try {
    if (!tracker) return nullptr;
    auto p = tracker->impl->machine_log_path();
    if (!p) return nullptr;
    return duplicate(p->string());
  } catch (...) {
    return nullptr;
  }
}

char* cw_parse_log_json(const char* path, char* err, size_t errlen) {
  try {
    if (!path) throw carbonwatch::InvalidArgument("path is NULL");
    const auto log = carbonwatch::parse_log(std::filesystem::path(path));
    return duplicate(carbonwatch::to_json(log).dump());
  } catch (const std::exception& e) {
    write_error(err, errlen, e.what());
  } catch (...) {
    write_error(err, errlen, "unknown error");
  }
  return nullptr;
}

void cw_free_string(char* s) { std::free(s); }

const char* cw_version(void) { return carbonwatch::kVersion; }

}
