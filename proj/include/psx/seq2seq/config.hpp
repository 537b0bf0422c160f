#pragma once

#include <cstddef>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace psx {

/// How the source is summarized.
///  - attention: bidirectional GRU encoder, soft attention, GRU decoder, deep output.
///  - summary:   one GRU over the source whose last state feeds single-step heads,
///               with a separate pointer network over the per-position states.
enum class Arch { attention, summary };

/// Output layer: the pointer softmax, or a plain softmax over `shortlist` ids.
enum class Head { pointer, softmax };

/// tanh_residual: two tanh layers with the first pre-activation added to the
/// second layer's input. relu: two plain ReLU layers.
enum class SwitchActivation { tanh_residual, relu };

struct ModelConfig {
  Arch arch = Arch::attention;
  Head head = Head::pointer;
  std::size_t src_vocab = 0;
  std::size_t tgt_vocab = 0;
  /// Size of the output softmax. Target ids at or above it train as `unk_id`
  /// under the softmax head.
  std::size_t shortlist = 0;
  std::size_t embed = 32;
  std::size_t hidden = 32;
  std::size_t switch_hidden = 32;
  /// Fixed source length; required by the summary pointer head, whose switch
  /// reads the location logits.
  std::size_t src_len = 0;
  SwitchActivation switch_activation = SwitchActivation::tanh_residual;
  double inverse_temperature = 1.0;
  double switch_bias_init = -1.0;
  double init_scale = 0.08;
  int unk_id = 0;
  int eos_id = -1;
  /// Source and target share one id space, so a copied token feeds back as-is.
  bool shared_vocab = false;

  std::size_t context_size() const { return arch == Arch::attention ? 2 * hidden : hidden; }

  void validate() const {
    if (src_vocab == 0 || tgt_vocab == 0 || shortlist == 0) {
      throw std::invalid_argument("model config: vocabulary sizes must be positive");
    }
    if (embed == 0 || hidden == 0 || switch_hidden == 0) {
      throw std::invalid_argument("model config: layer sizes must be positive");
    }
    if (!(inverse_temperature > 0.0)) throw std::invalid_argument("model config: inverse_temperature must be > 0");
    if (arch == Arch::summary && head == Head::pointer && src_len == 0) {
      throw std::invalid_argument("model config: summary pointer head needs src_len");
    }
    if (unk_id < 0 || static_cast<std::size_t>(unk_id) >= shortlist) {
      throw std::invalid_argument("model config: unk_id must lie inside the shortlist");
    }
  }

  std::string to_meta() const {
    std::ostringstream os;
    os.precision(17);
    os << "arch=" << (arch == Arch::attention ? "attention" : "summary") << '\n'
       << "head=" << (head == Head::pointer ? "pointer" : "softmax") << '\n'
       << "src_vocab=" << src_vocab << '\n'
       << "tgt_vocab=" << tgt_vocab << '\n'
       << "shortlist=" << shortlist << '\n'
       << "embed=" << embed << '\n'
       << "hidden=" << hidden << '\n'
       << "switch_hidden=" << switch_hidden << '\n'
       << "src_len=" << src_len << '\n'
       << "switch_activation=" << (switch_activation == SwitchActivation::relu ? "relu" : "tanh_residual") << '\n'
       << "inverse_temperature=" << inverse_temperature << '\n'
       << "switch_bias_init=" << switch_bias_init << '\n'
       << "init_scale=" << init_scale << '\n'
       << "unk_id=" << unk_id << '\n'
       << "eos_id=" << eos_id << '\n'
       << "shared_vocab=" << (shared_vocab ? 1 : 0) << '\n';
    return os.str();
  }

  static ModelConfig from_meta(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto get = [&](const char* key) -> const std::string& {
      auto it = kv.find(key);
      if (it == kv.end()) throw std::invalid_argument(std::string("model metadata lacks '") + key + "'");
      return it->second;
    };
    ModelConfig c;
    c.arch = get("arch") == "summary" ? Arch::summary : Arch::attention;
    c.head = get("head") == "softmax" ? Head::softmax : Head::pointer;
    c.src_vocab = std::stoul(get("src_vocab"));
    c.tgt_vocab = std::stoul(get("tgt_vocab"));
    c.shortlist = std::stoul(get("shortlist"));
    c.embed = std::stoul(get("embed"));
    c.hidden = std::stoul(get("hidden"));
    c.switch_hidden = std::stoul(get("switch_hidden"));
    c.src_len = std::stoul(get("src_len"));
    c.switch_activation = get("switch_activation") == "relu" ? SwitchActivation::relu : SwitchActivation::tanh_residual;
    c.inverse_temperature = std::stod(get("inverse_temperature"));
    c.switch_bias_init = std::stod(get("switch_bias_init"));
    c.init_scale = std::stod(get("init_scale"));
    c.unk_id = std::stoi(get("unk_id"));
    c.eos_id = std::stoi(get("eos_id"));
    c.shared_vocab = get("shared_vocab") == "1";
    return c;
  }
};

}  // namespace psx
