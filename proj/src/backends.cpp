#include "carbonwatch/backends.hpp"

#include <dlfcn.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include "carbonwatch/errors.hpp"

namespace carbonwatch {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  s.erase(s.find_last_not_of(ws) + 1);
  return s;
}

double parse_number(const std::string& text, std::size_t line_no, const char* what) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(value)) {
    throw InvalidArgument("replay trace line " + std::to_string(line_no) + ": bad " + what +
                          " '" + text + "'");
  }
  return value;
}

}  // namespace

ReplayTrace ReplayTrace::parse(std::istream& in) {
  ReplayTrace trace;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    auto fields = split(line, ',');
    for (auto& f : fields) f = trim(f);
    if (!have_header) {
      if (fields.empty() || fields.front() != "devices") {
        throw InvalidArgument("replay trace line " + std::to_string(line_no) +
                              ": expected 'devices,...' header");
      }
      for (std::size_t i = 1; i < fields.size(); ++i) {
        const auto& spec = fields[i];
        const auto colon = spec.find(':');
        if (colon == std::string::npos) {
          throw InvalidArgument("replay trace header: device '" + spec + "' lacks a kind");
        }
        Device device;
        device.id = spec.substr(0, colon);
        auto rest = spec.substr(colon + 1);
        const auto eq = rest.find('=');
        const auto kind_text = rest.substr(0, eq);
        const auto kind = parse_device_kind(kind_text);
        if (!kind || device.id.empty()) {
          throw InvalidArgument("replay trace header: bad device '" + spec + "'");
        }
        device.kind = *kind;
        device.label = eq == std::string::npos ? device.id : rest.substr(eq + 1);
        device.backend = "replay";
        if (trace.rows.count(device.id)) {
          throw InvalidArgument("replay trace header: duplicate device " + device.id);
        }
        trace.rows[device.id];
        trace.devices.push_back(device);
      }
      have_header = true;
      continue;
    }
    if (fields.size() != 3) {
      throw InvalidArgument("replay trace line " + std::to_string(line_no) +
                            ": expected timestamp_s,device_id,power_w");
    }
    TraceRow row;
    row.timestamp_s = parse_number(fields[0], line_no, "timestamp");
    row.device_id = fields[1];
    row.power_w = parse_number(fields[2], line_no, "power");
    if (row.power_w < 0.0) {
      throw InvalidArgument("replay trace line " + std::to_string(line_no) +
                            ": negative power");
    }
    auto it = trace.rows.find(row.device_id);
    if (it == trace.rows.end()) {
      throw InvalidArgument("replay trace line " + std::to_string(line_no) +
                            ": unknown device " + row.device_id);
    }
    if (!it->second.empty() && !(row.timestamp_s > it->second.back().timestamp_s)) {
      throw InvalidArgument("replay trace line " + std::to_string(line_no) +
                            ": timestamps must increase per device");
    }
    it->second.push_back(std::move(row));
  }
  if (!have_header) throw InvalidArgument("replay trace is empty");
  for (const auto& [id, rows] : trace.rows) {
    if (rows.empty()) throw InvalidArgument("replay trace has no rows for device " + id);
  }
  return trace;
}

ReplayTrace ReplayTrace::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open replay trace " + path.string());
  return parse(in);
}

void ReplayTrace::save(std::ostream& out) const {
  out << "devices";
  for (const auto& d : devices) out << ',' << d.id << ':' << to_string(d.kind) << '=' << d.label;
  out << '\n';
  out.precision(17);
  for (const auto& d : devices) {
    for (const auto& row : rows.at(d.id)) {
      out << row.timestamp_s << ',' << row.device_id << ',' << row.power_w << '\n';
    }
  }
}

double ReplayTrace::power_at(const std::string& device_id, double t, bool loop) const {
  const auto& series = rows.at(device_id);
  if (loop && series.size() > 1) {
    const double first = series.front().timestamp_s;
    const double span = series.back().timestamp_s - first;
    if (span > 0.0 && t > series.back().timestamp_s) {
      t = first + std::fmod(t - first, span);
    }
  }
  auto it = std::upper_bound(series.begin(), series.end(), t,
                             [](double v, const TraceRow& r) { return v < r.timestamp_s; });
  if (it == series.begin()) return series.front().power_w;
  return std::prev(it)->power_w;
}

ReplayBackend::ReplayBackend(ReplayTrace trace, bool loop)
    : trace_(std::move(trace)), loop_(loop) {}

std::vector<Device> ReplayBackend::enumerate() { return trace_.devices; }

void ReplayBackend::start(double now) { origin_ = now; }

Reading ReplayBackend::read(const Device& device, double now) {
  if (!trace_.rows.count(device.id)) throw SampleError("replay has no device " + device.id, true);
  if (!origin_) origin_ = now;
  return InstantPower{trace_.power_at(device.id, now - *origin_, loop_)};
}

// --- powercap -------------------------------------------------------------

namespace {

std::string read_line(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw SampleError("cannot read " + file.string(), !std::filesystem::exists(file));
  std::string s;
  std::getline(in, s);
  return trim(s);
}

std::uint64_t read_u64(const std::filesystem::path& file) {
  const auto text = read_line(file);
  try {
    std::size_t used = 0;
    const auto v = std::stoull(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw SampleError("unexpected contents in " + file.string(), false);
}

}  // namespace

PowercapBackend::PowercapBackend(std::filesystem::path root, bool packages, bool dram)
    : root_(std::move(root)), packages_(packages), dram_(dram) {}

std::vector<Device> PowercapBackend::enumerate() {
  namespace fs = std::filesystem;
  if (!fs::is_directory(root_)) throw Error("no power-capping interface at " + root_.string());
  static const std::regex package_re(R"(intel-rapl:(\d+))");
  static const std::regex sub_re(R"(intel-rapl:(\d+):(\d+))");

  std::vector<std::pair<std::string, fs::path>> entries;
  for (const auto& entry : fs::directory_iterator(root_)) {
    entries.emplace_back(entry.path().filename().string(), entry.path());
  }
  std::sort(entries.begin(), entries.end());

  std::vector<Device> out;
  for (const auto& [name, dir] : entries) {
    std::smatch m;
    Device device;
    if (std::regex_match(name, m, package_re)) {
      if (!packages_) continue;
      const auto domain = read_line(dir / "name");
      if (domain.rfind("package", 0) != 0) continue;
      device.kind = DeviceKind::cpu_package;
      device.label = "cpu:" + m[1].str();
    } else if (std::regex_match(name, m, sub_re)) {
      if (!dram_) continue;
      if (read_line(dir / "name") != "dram") continue;
      device.kind = DeviceKind::dram;
      device.label = "dram:" + m[1].str();
    } else {
      continue;
    }
    read_u64(dir / "energy_uj");
    read_u64(dir / "max_energy_range_uj");
    device.id = name;
    device.backend = "powercap";
    domains_[device.id] = dir;
    out.push_back(device);
  }
  if (out.empty()) throw Error("no readable package or dram domains under " + root_.string());
  return out;
}

Reading PowercapBackend::read(const Device& device, double now) {
  auto it = domains_.find(device.id);
  if (it == domains_.end()) throw SampleError("unknown powercap domain " + device.id, true);
  CounterReading r;
  r.device_id = device.id;
  r.timestamp = now;
  r.energy_uj = read_u64(it->second / "energy_uj");
  r.max_range_uj = read_u64(it->second / "max_energy_range_uj");
  return r;
}

// --- nvml -----------------------------------------------------------------

struct NvmlBackend::Api {
  using init_fn = int (*)();
  using shutdown_fn = int (*)();
  using count_fn = int (*)(unsigned*);
  using handle_fn = int (*)(unsigned, void**);
  using name_fn = int (*)(void*, char*, unsigned);
  using power_fn = int (*)(void*, unsigned*);

  init_fn init = nullptr;
  shutdown_fn shutdown = nullptr;
  count_fn count = nullptr;
  handle_fn handle = nullptr;
  name_fn name = nullptr;
  power_fn power = nullptr;
};

namespace {
constexpr int kNvmlSuccess = 0;
constexpr int kNvmlErrorNotFound = 6;
constexpr int kNvmlErrorGpuIsLost = 15;
}  // namespace

NvmlBackend::NvmlBackend(std::string library) : library_(std::move(library)) {}

NvmlBackend::~NvmlBackend() {
  if (initialized_ && api_ && api_->shutdown) api_->shutdown();
  delete api_;
  if (handle_) dlclose(handle_);
}

std::vector<Device> NvmlBackend::enumerate() {
  handle_ = dlopen(library_.c_str(), RTLD_NOW | RTLD_LOCAL);
  if (!handle_) throw Error("cannot load " + library_);
  api_ = new Api;
  auto sym = [&](const char* name) {
    void* p = dlsym(handle_, name);
    if (!p) throw Error(std::string("missing symbol ") + name + " in " + library_);
    return p;
  };
  api_->init = reinterpret_cast<Api::init_fn>(sym("nvmlInit_v2"));
  api_->shutdown = reinterpret_cast<Api::shutdown_fn>(sym("nvmlShutdown"));
  api_->count = reinterpret_cast<Api::count_fn>(sym("nvmlDeviceGetCount_v2"));
  api_->handle = reinterpret_cast<Api::handle_fn>(sym("nvmlDeviceGetHandleByIndex_v2"));
  api_->name = reinterpret_cast<Api::name_fn>(sym("nvmlDeviceGetName"));
  api_->power = reinterpret_cast<Api::power_fn>(sym("nvmlDeviceGetPowerUsage"));

  if (api_->init() != kNvmlSuccess) throw Error("nvmlInit failed");
  initialized_ = true;
  unsigned count = 0;
  if (api_->count(&count) != kNvmlSuccess) throw Error("nvmlDeviceGetCount failed");
  std::vector<Device> out;
  for (unsigned i = 0; i < count; ++i) {
    void* dev = nullptr;
    if (api_->handle(i, &dev) != kNvmlSuccess) continue;
    char name[96] = {0};
    Device device;
    device.id = "gpu:" + std::to_string(i);
    device.kind = DeviceKind::gpu;
    device.label = api_->name(dev, name, sizeof(name)) == kNvmlSuccess ? name : device.id;
    device.backend = "nvml";
    devices_[device.id] = dev;
    out.push_back(device);
  }
  return out;
}

Reading NvmlBackend::read(const Device& device, double) {
  auto it = devices_.find(device.id);
  if (it == devices_.end()) throw SampleError("unknown GPU " + device.id, true);
  unsigned milliwatts = 0;
  const int rc = api_->power(it->second, &milliwatts);
  if (rc == kNvmlErrorGpuIsLost || rc == kNvmlErrorNotFound) {
    throw SampleError("GPU " + device.id + " is lost", true);
  }
  if (rc != kNvmlSuccess) {
    throw SampleError("nvmlDeviceGetPowerUsage failed with code " + std::to_string(rc), false);
  }
  return InstantPower{milliwatts / 1000.0};
}

}  // namespace carbonwatch
