#ifndef SGDLAB_CONFIG_HPP
#define SGDLAB_CONFIG_HPP

#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sgdlab/harness.hpp"

namespace sgdlab {

/// Experiment configuration text:
///
///   # comment
///   [problem]
///   problem = "quadratic"        # quadratic | pseudo_huber | smooth_rastrigin
///   spectrum = [1, 4]            #   | least_squares
///   [oracle]
///   oracle = "gaussian"          # gaussian | relative | minibatch
///   sigma = 0.5
///   [schedule]
///   alpha = {1, 0.7}             # {c, a}: alpha_k = c k^-a
///   mu = {1, 0.2}                # {m, b}: mu_k = m k^-b
///   [run]
///   method = "msgd"
///   horizon = 100000
///
/// One `key = value` per line. Values are numbers, booleans, quoted strings,
/// `[..]` lists, `[[..], [..]]` matrices or `{x, y}` pairs. Unknown sections
/// and keys are rejected.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raw values keyed by section then key, in file order.
struct ConfigDoc {
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>>
      sections;

  void set(const std::string& section, const std::string& key,
           const std::string& raw);
  const std::string* get(const std::string& section, const std::string& key) const;
};

ConfigDoc parse_config_text(const std::string& text);

/// Applies `section.key=value`.
void apply_override(ConfigDoc& doc, const std::string& assignment);

ExperimentConfig to_experiment_config(const ConfigDoc& doc);

/// Canonical text form; parsing it back yields an identical config.
std::string to_config_text(const ExperimentConfig& cfg);

ExperimentConfig load_config_file(const std::string& path,
                                  const std::vector<std::string>& overrides = {});

/// Manifest JSON: the canonical config text plus the master seed.
std::string manifest_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_manifest(const std::string& json_text);

}  // namespace sgdlab

#endif  // SGDLAB_CONFIG_HPP
