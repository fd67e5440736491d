#include "dat/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace dat {

std::string_view to_string(LossKind kind) { return kind == LossKind::mse ? "mse" : "ccc"; }

std::string_view to_string(ModelVariant variant) {
  return variant == ModelVariant::dat ? "dat" : "six_encoder";
}

LossKind parse_loss_kind(std::string_view text) {
  if (text == "mse") return LossKind::mse;
  if (text == "ccc") return LossKind::ccc;
  throw UsageError("unknown loss kind '" + std::string(text) + "' (expected mse|ccc)");
}

ModelVariant parse_model_variant(std::string_view text) {
  if (text == "dat") return ModelVariant::dat;
  if (text == "six_encoder") return ModelVariant::six_encoder;
  throw UsageError("unknown model variant '" + std::string(text) + "' (expected dat|six_encoder)");
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw UsageError("invalid model config: " + msg); };
  if (d < 1) fail("d must be >= 1");
  if (heads < 1 || d % heads != 0) fail("heads (" + std::to_string(heads) + ") must divide d (" + std::to_string(d) + ")");
  if (dae_layers < 0) fail("dae_layers must be >= 0");
  if (encoder_depth < 1) fail("encoder_depth must be >= 1");
  if (ffn_mult < 1) fail("ffn_mult must be >= 1");
  if (head_hidden < 0) fail("head_hidden must be >= 0");
  if (!(dropout >= 0.0 && dropout < 1.0)) fail("dropout must be in [0, 1)");
  if (!(layer_norm_eps > 0.0)) fail("layer_norm_eps must be positive");
  if (window.core < 1) fail("window.core (s) must be >= 1");
  if (window.context < 0) fail("window.context (l) must be >= 0");
  for (std::size_t i = 0; i < kStreamCount; ++i)
    if (feature_dims[i] < 1) fail("feature dim " + std::string(kStreamKeys[i]) + " must be positive");
  if (use_positional && window.length() > max_len) fail("window length exceeds max_len");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw UsageError("invalid train config: " + msg); };
  if (!(lr > 0.0)) fail("lr must be positive");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (epochs < 0) fail("epochs must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("Adam betas must be in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) fail("ema_decay must be in [0, 1)");
  if (!(grad_clip >= 0.0)) fail("grad_clip must be >= 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
}

std::string_view to_string(LrSchedule schedule) { return schedule == LrSchedule::cosine ? "cosine" : "constant"; }

LrSchedule parse_lr_schedule(std::string_view text) {
  if (text == "constant") return LrSchedule::constant;
  if (text == "cosine") return LrSchedule::cosine;
  throw UsageError("unknown lr_schedule '" + std::string(text) + "' (expected constant|cosine)");
}

RunConfig preset(std::string_view name) {
  RunConfig cfg;
  if (name == "paper-noxi") return cfg;
  if (name == "paper-mpiigi") {
    cfg.model.loss = LossKind::ccc;
    return cfg;
  }
  if (name == "desk") {
    cfg.model.d = 32;
    cfg.model.heads = 4;
    cfg.model.dropout = 0.1;
    cfg.train.batch_size = 16;
    cfg.train.epochs = 30;
    cfg.train.lr = 1e-3;
    cfg.train.ema_decay = 0.9;
    return cfg;
  }
  throw UsageError("unknown preset '" + std::string(name) + "' (expected paper-noxi|paper-mpiigi|desk)");
}

namespace {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T out{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    throw UsageError("cannot parse value '" + std::string(text) + "' for key " + std::string(key));
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw UsageError("cannot parse boolean '" + std::string(text) + "' for key " + std::string(key));
}

using Setter = std::function<void(RunConfig&, std::string_view, std::string_view)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table = [] {
    std::map<std::string, Setter, std::less<>> t;
    auto integer = [](auto member) {
      return [member](RunConfig& c, std::string_view k, std::string_view v) { member(c) = parse_number<Index>(k, v); };
    };
    auto real = [](auto member) {
      return [member](RunConfig& c, std::string_view k, std::string_view v) { member(c) = parse_number<double>(k, v); };
    };
    auto boolean = [](auto member) {
      return [member](RunConfig& c, std::string_view k, std::string_view v) { member(c) = parse_bool(k, v); };
    };
    t["variant"] = [](RunConfig& c, std::string_view, std::string_view v) { c.model.variant = parse_model_variant(v); };
    t["loss"] = [](RunConfig& c, std::string_view, std::string_view v) { c.model.loss = parse_loss_kind(v); };
    t["d"] = integer([](RunConfig& c) -> Index& { return c.model.d; });
    t["dae_layers"] = integer([](RunConfig& c) -> Index& { return c.model.dae_layers; });
    t["encoder_depth"] = integer([](RunConfig& c) -> Index& { return c.model.encoder_depth; });
    t["heads"] = integer([](RunConfig& c) -> Index& { return c.model.heads; });
    t["ffn_mult"] = integer([](RunConfig& c) -> Index& { return c.model.ffn_mult; });
    t["head_hidden"] = integer([](RunConfig& c) -> Index& { return c.model.head_hidden; });
    t["max_len"] = integer([](RunConfig& c) -> Index& { return c.model.max_len; });
    t["window.core"] = integer([](RunConfig& c) -> Index& { return c.model.window.core; });
    t["window.context"] = integer([](RunConfig& c) -> Index& { return c.model.window.context; });
    for (std::size_t i = 0; i < kStreamCount; ++i) {
      t["dims." + std::string(kStreamKeys[i])] = integer([i](RunConfig& c) -> Index& { return c.model.feature_dims[i]; });
    }
    t["dropout"] = real([](RunConfig& c) -> double& { return c.model.dropout; });
    t["layer_norm_eps"] = real([](RunConfig& c) -> double& { return c.model.layer_norm_eps; });
    t["use_mgf"] = boolean([](RunConfig& c) -> bool& { return c.model.use_mgf; });
    t["use_dae"] = boolean([](RunConfig& c) -> bool& { return c.model.use_dae; });
    t["share_mgf_weights"] = boolean([](RunConfig& c) -> bool& { return c.model.share_mgf_weights; });
    t["use_positional"] = boolean([](RunConfig& c) -> bool& { return c.model.use_positional; });
    t["init_seed"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.model.init_seed = parse_number<std::uint64_t>(k, v);
    };
    t["lr"] = real([](RunConfig& c) -> double& { return c.train.lr; });
    t["lr_schedule"] = [](RunConfig& c, std::string_view, std::string_view v) {
      c.train.lr_schedule = parse_lr_schedule(v);
    };
    t["grad_clip"] = real([](RunConfig& c) -> double& { return c.train.grad_clip; });
    t["weight_decay"] = real([](RunConfig& c) -> double& { return c.train.weight_decay; });
    t["ccc_per_window"] = boolean([](RunConfig& c) -> bool& { return c.train.ccc_per_window; });
    t["batch_size"] = integer([](RunConfig& c) -> Index& { return c.train.batch_size; });
    t["epochs"] = integer([](RunConfig& c) -> Index& { return c.train.epochs; });
    t["beta1"] = real([](RunConfig& c) -> double& { return c.train.beta1; });
    t["beta2"] = real([](RunConfig& c) -> double& { return c.train.beta2; });
    t["adam_eps"] = real([](RunConfig& c) -> double& { return c.train.adam_eps; });
    t["ema_decay"] = real([](RunConfig& c) -> double& { return c.train.ema_decay; });
    t["seed"] = [](RunConfig& c, std::string_view k, std::string_view v) {
      c.train.seed = parse_number<std::uint64_t>(k, v);
    };
    t["report_interval"] = integer([](RunConfig& c) -> Index& { return c.train.report_interval; });
    t["verbose"] = boolean([](RunConfig& c) -> bool& { return c.train.verbose; });
    return t;
  }();
  return table;
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto it = setters().find(key);
  if (it == setters().end()) throw UsageError("unknown config key '" + std::string(key) + "'");
  it->second(cfg, key, trim(value));
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = line;
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError(path + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    apply_setting(cfg, trim(view.substr(0, eq)), trim(view.substr(eq + 1)));
  }
}

std::string to_key_values(const RunConfig& cfg) {
  const auto& m = cfg.model;
  const auto& t = cfg.train;
  std::ostringstream os;
  os.precision(17);
  os << "variant = " << to_string(m.variant) << '\n'
     << "loss = " << to_string(m.loss) << '\n'
     << "d = " << m.d << '\n'
     << "dae_layers = " << m.dae_layers << '\n'
     << "encoder_depth = " << m.encoder_depth << '\n'
     << "heads = " << m.heads << '\n'
     << "ffn_mult = " << m.ffn_mult << '\n'
     << "head_hidden = " << m.head_hidden << '\n'
     << "dropout = " << m.dropout << '\n'
     << "layer_norm_eps = " << m.layer_norm_eps << '\n'
     << "max_len = " << m.max_len << '\n'
     << "window.core = " << m.window.core << '\n'
     << "window.context = " << m.window.context << '\n';
  for (std::size_t i = 0; i < kStreamCount; ++i) os << "dims." << kStreamKeys[i] << " = " << m.feature_dims[i] << '\n';
  os << std::boolalpha << "use_mgf = " << m.use_mgf << '\n'
     << "use_dae = " << m.use_dae << '\n'
     << "share_mgf_weights = " << m.share_mgf_weights << '\n'
     << "use_positional = " << m.use_positional << '\n'
     << "init_seed = " << m.init_seed << '\n'
     << "lr = " << t.lr << '\n'
     << "lr_schedule = " << to_string(t.lr_schedule) << '\n'
     << "grad_clip = " << t.grad_clip << '\n'
     << "weight_decay = " << t.weight_decay << '\n'
     << "ccc_per_window = " << t.ccc_per_window << '\n'
     << "batch_size = " << t.batch_size << '\n'
     << "epochs = " << t.epochs << '\n'
     << "beta1 = " << t.beta1 << '\n'
     << "beta2 = " << t.beta2 << '\n'
     << "adam_eps = " << t.adam_eps << '\n'
     << "ema_decay = " << t.ema_decay << '\n'
     << "seed = " << t.seed << '\n'
     << "report_interval = " << t.report_interval << '\n'
     << "verbose = " << t.verbose << '\n';
  return os.str();
}

nlohmann::json to_json(const ModelConfig& m) {
  nlohmann::json dims;
  for (std::size_t i = 0; i < kStreamCount; ++i) dims[std::string(kStreamFiles[i])] = m.feature_dims[i];
  return {{"variant", to_string(m.variant)},
          {"loss", to_string(m.loss)},
          {"d", m.d},
          {"dae_layers", m.dae_layers},
          {"encoder_depth", m.encoder_depth},
          {"heads", m.heads},
          {"ffn_mult", m.ffn_mult},
          {"head_hidden", m.head_hidden},
          {"dropout", m.dropout},
          {"layer_norm_eps", m.layer_norm_eps},
          {"max_len", m.max_len},
          {"window", {{"core", m.window.core}, {"context", m.window.context}}},
          {"feature_dims", dims},
          {"use_mgf", m.use_mgf},
          {"use_dae", m.use_dae},
          {"share_mgf_weights", m.share_mgf_weights},
          {"use_positional", m.use_positional},
          {"init_seed", m.init_seed}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig m;
    m.variant = parse_model_variant(j.at("variant").get<std::string>());
    m.loss = parse_loss_kind(j.at("loss").get<std::string>());
    m.d = j.at("d").get<Index>();
    m.dae_layers = j.at("dae_layers").get<Index>();
    m.encoder_depth = j.at("encoder_depth").get<Index>();
    m.heads = j.at("heads").get<Index>();
    m.ffn_mult = j.at("ffn_mult").get<Index>();
    m.head_hidden = j.at("head_hidden").get<Index>();
    m.dropout = j.at("dropout").get<double>();
    m.layer_norm_eps = j.at("layer_norm_eps").get<double>();
    m.max_len = j.at("max_len").get<Index>();
    m.window.core = j.at("window").at("core").get<Index>();
    m.window.context = j.at("window").at("context").get<Index>();
    for (std::size_t i = 0; i < kStreamCount; ++i) {
      m.feature_dims[i] = j.at("feature_dims").at(std::string(kStreamFiles[i])).get<Index>();
    }
    m.use_mgf = j.at("use_mgf").get<bool>();
    m.use_dae = j.at("use_dae").get<bool>();
    m.share_mgf_weights = j.at("share_mgf_weights").get<bool>();
    m.use_positional = j.at("use_positional").get<bool>();
    m.init_seed = j.at("init_seed").get<std::uint64_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad model config in manifest: ") + e.what());
  } catch (const UsageError& e) {
    throw FormatError(std::string("bad model config in manifest: ") + e.what());
  }
}

}  // namespace dat
