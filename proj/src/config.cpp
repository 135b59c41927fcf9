#include "pinet/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace pinet {

void RunConfig::validate() const {
  model.validate();
  train.validate();
}

RunConfig full_run_config() { return RunConfig{}; }

RunConfig desk_run_config(int iterations, int clips) {
  if (iterations <= 0) throw ConfigError("desk preset needs a positive iteration count");
  if (clips <= 0) throw ConfigError("desk preset needs a positive clip count");
  RunConfig cfg;
  cfg.model.pnet.encoder.base_channels = 8;
  cfg.model.pnet.flow.radius = 1;
  cfg.model.pnet.flow.widths = {12, 8};
  cfg.model.inet.width = 8;

  auto& t = cfg.train;
  t.epochs = std::max(1, iterations / clips);
  auto scaled = [&](int epoch_of_200) { return std::max(1, epoch_of_200 * t.epochs / 200); };
  t.lr = 1e-3;
  t.milestones.clear();
  for (int m : {100, 150, 175}) {
    const int s = scaled(m);
    if (s < t.epochs && (t.milestones.empty() || s > t.milestones.back())) t.milestones.push_back(s);
  }
  // A short motion-only phase, then a ramp so the zero-initialized decoders start gently.
  t.staged_epochs = t.epochs >= 20 ? t.epochs / 20 : 0;
  t.warmup_epochs = t.epochs >= 20 ? t.epochs / 10 : 0;
  t.batch = 1;
  t.keep_checkpoints = 2;
  t.sampling = {64, 64, 64, 64};
  return cfg;
}

namespace {

std::string fmt_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

[[noreturn]] void bad_value(const std::string& key, std::string_view value, const char* what) {
  throw ConfigError("config key '" + key + "': cannot parse '" + std::string(value) + "' as " + what);
}

template <typename T>
T parse_number(const std::string& key, std::string_view value, const char* what) {
  T out{};
  auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) bad_value(key, value, what);
  return out;
}

bool parse_bool(const std::string& key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "bool");
}

std::vector<std::string_view> split_list(std::string_view v) {
  std::vector<std::string_view> out;
  if (v.empty()) return out;
  size_t start = 0;
  while (true) {
    auto comma = v.find(',', start);
    out.push_back(v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

struct Field {
  std::string key;
  std::function<std::string()> get;
  std::function<void(std::string_view)> set;
};

Field int_field(std::string key, int& ref) {
  return {key, [&ref] { return std::to_string(ref); },
          [&ref, key](std::string_view v) { ref = parse_number<int>(key, v, "int"); }};
}

Field u64_field(std::string key, std::uint64_t& ref) {
  return {key, [&ref] { return std::to_string(ref); },
          [&ref, key](std::string_view v) { ref = parse_number<std::uint64_t>(key, v, "unsigned int"); }};
}

Field real_field(std::string key, double& ref) {
  return {key, [&ref] { return fmt_real(ref); },
          [&ref, key](std::string_view v) { ref = parse_number<double>(key, v, "real"); }};
}

Field bool_field(std::string key, bool& ref) {
  return {key, [&ref] { return fmt_bool(ref); }, [&ref, key](std::string_view v) { ref = parse_bool(key, v); }};
}

Field int_list_field(std::string key, std::vector<int>& ref) {
  return {key,
          [&ref] {
            std::string s;
            for (size_t k = 0; k < ref.size(); ++k) s += (k ? "," : "") + std::to_string(ref[k]);
            return s;
          },
          [&ref, key](std::string_view v) {
            ref.clear();
            for (auto item : split_list(v)) ref.push_back(parse_number<int>(key, trim(item), "int list"));
          }};
}

Field omega_field(std::string key, std::array<double, kPyramidLevels>& ref) {
  return {key,
          [&ref] {
            std::string s;
            for (size_t k = 0; k < ref.size(); ++k) s += (k ? "," : "") + fmt_real(ref[k]);
            return s;
          },
          [&ref, key](std::string_view v) {
            auto items = split_list(v);
            if (items.size() != ref.size()) bad_value(key, v, "list of 5 reals (level 1 first)");
            for (size_t k = 0; k < ref.size(); ++k) ref[k] = parse_number<double>(key, trim(items[k]), "real");
          }};
}

std::vector<Field> fields(RunConfig& c) {
  auto& p = c.model.pnet;
  auto& t = c.train;
  return {
      int_field("encoder.base_channels", p.encoder.base_channels),
      real_field("encoder.slope", p.encoder.slope),
      int_field("propagation.m", p.propagation.m),
      bool_field("propagation.global", p.propagation.enable_global),
      bool_field("propagation.local", p.propagation.enable_local),
      int_field("flow.radius", p.flow.radius),
      int_list_field("flow.widths", p.flow.widths),
      bool_field("decoder.attention", p.decoder.use_attention),
      bool_field("decoder.warp_anchor_only", p.decoder.warp_anchor_only),
      int_field("inet.width", c.model.inet.width),
      real_field("inet.visibility_eps", c.model.inet.visibility_eps),
      int_field("schedule.M", c.model.schedule.M),
      int_field("schedule.N", c.model.schedule.N),
      omega_field("loss.flow_omega", t.weights.flow_omega),
      omega_field("loss.frame_omega", t.weights.frame_omega),
      real_field("loss.lambda1", t.weights.lambda1),
      real_field("loss.lambda2", t.weights.lambda2),
      real_field("loss.lambda3", t.weights.lambda3),
      bool_field("loss.no_m2fnet_loss", t.toggles.no_m2fnet_loss),
      bool_field("loss.no_interframe_motion", t.toggles.no_interframe_motion),
      bool_field("loss.no_direction_supervision", t.toggles.no_direction_supervision),
      bool_field("loss.no_gdl", t.toggles.no_gdl),
      real_field("inet_loss.reconstruction", t.inet_weights.reconstruction),
      real_field("inet_loss.warping", t.inet_weights.warping),
      real_field("inet_loss.smoothness", t.inet_weights.smoothness),
      real_field("inet_loss.gdl", t.inet_weights.gdl),
      int_field("train.epochs", t.epochs),
      real_field("train.lr", t.lr),
      int_list_field("train.milestones", t.milestones),
      real_field("train.gamma", t.gamma),
      real_field("train.beta1", t.beta1),
      real_field("train.beta2", t.beta2),
      real_field("train.weight_decay", t.weight_decay),
      int_field("train.batch", t.batch),
      int_field("train.staged_epochs", t.staged_epochs),
      int_field("train.warmup_epochs", t.warmup_epochs),
      u64_field("train.seed", t.seed),
      int_field("train.keep_checkpoints", t.keep_checkpoints),
      int_field("sampling.resize_width", t.sampling.resize_width),
      int_field("sampling.resize_height", t.sampling.resize_height),
      int_field("sampling.crop_width", t.sampling.crop_width),
      int_field("sampling.crop_height", t.sampling.crop_height),
  };
}

}  // namespace

std::string render_config(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string out;
  for (const auto& f : fields(copy)) out += f.key + " = " + f.get() + "\n";
  return out;
}

RunConfig parse_config(const std::string& text, const RunConfig& base) {
  RunConfig cfg = base;
  auto table = fields(cfg);
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key(trim(line.substr(0, eq)));
    auto value = trim(line.substr(eq + 1));
    auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    it->set(value);
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), base);
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace pinet
