#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

namespace psx {

struct TrainConfig {
  std::string optimizer = "adam";  // adam | adadelta
  double learning_rate = 8e-4;     // adam only; adadelta runs at unit rate
  std::size_t batch_size = 250;
  double max_grad_norm = 1.0;
  double inverse_temperature = 2.0;
  double switch_bias_init = -1.0;
  std::size_t early_stop_patience = 10;
  std::size_t eval_every = 500;
  std::size_t max_updates = 50000;
  double adadelta_rho = 0.95;
  double adadelta_eps = 1e-6;
  std::uint64_t seed = 1;

  void validate() const {
    if (optimizer != "adam" && optimizer != "adadelta") {
      throw std::invalid_argument("optimizer must be adam or adadelta, got '" + optimizer + "'");
    }
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (!(max_grad_norm > 0.0)) throw std::invalid_argument("max_grad_norm must be > 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("eval_every must be >= 1");
    if (early_stop_patience < 1) throw std::invalid_argument("early_stop_patience must be >= 1");
    if (!(inverse_temperature > 0.0)) throw std::invalid_argument("inverse_temperature must be > 0");
  }

  /// Applies one `key=value` setting; keys are the field names.
  void set(const std::string& key, const std::string& value) {
    try {
      if (key == "optimizer") optimizer = value;
      else if (key == "learning_rate") learning_rate = std::stod(value);
      else if (key == "batch_size") batch_size = std::stoul(value);
      else if (key == "max_grad_norm") max_grad_norm = std::stod(value);
      else if (key == "inverse_temperature") inverse_temperature = std::stod(value);
      else if (key == "switch_bias_init") switch_bias_init = std::stod(value);
      else if (key == "early_stop_patience") early_stop_patience = std::stoul(value);
      else if (key == "eval_every") eval_every = std::stoul(value);
      else if (key == "max_updates") max_updates = std::stoul(value);
      else if (key == "adadelta_rho") adadelta_rho = std::stod(value);
      else if (key == "adadelta_eps") adadelta_eps = std::stod(value);
      else if (key == "seed") seed = std::stoull(value);
      else throw std::invalid_argument("unknown config key '" + key + "'");
    } catch (const std::logic_error& e) {
      if (std::string(e.what()).starts_with("unknown config key")) throw;
      throw std::invalid_argument("bad value '" + value + "' for config key '" + key + "'");
    }
  }

  /// Reads `key=value` lines; blank lines and lines starting with '#' are skipped.
  static TrainConfig parse(std::istream& in) { return parse(in, TrainConfig()); }

  static TrainConfig parse(std::istream& in, TrainConfig base) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw std::invalid_argument("config line " + std::to_string(lineno) + " is not key=value");
      }
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        const auto e = s.find_last_not_of(" \t\r");
        return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
      };
      base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return base;
  }

  static TrainConfig load(const std::string& path) { return load(path, TrainConfig()); }

  static TrainConfig load(const std::string& path, TrainConfig base) {
    std::ifstream f(path);
    if (!f) throw std::ios_base::failure("cannot open config '" + path + "'");
    return parse(f, std::move(base));
  }
};

}  // namespace psx
