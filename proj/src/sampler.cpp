#include "cgap2/sampler.hpp"

#include "cgap2/error.hpp"

namespace cgap2 {

void SamplerConfig::validate() const {
  require(context_n >= 1, ErrorKind::Config, "sampler: context_n must be positive");
  require(gap_g >= 1, ErrorKind::Config, "sampler: gap_g must be positive");
  require(k_value >= 1, ErrorKind::Config, "sampler: k_value must be positive");
}

WindowSample sample_window(const SamplerConfig& config, std::size_t sequence_length, const std::string& sequence_id) {
  config.validate();
  const std::size_t need = config.required_length();
  if (sequence_length < need)
    throw WindowError("sampler: sequence of length " + std::to_string(sequence_length) + " needs at least " +
                          std::to_string(need) + " frames",
                      need);
  WindowSample w;
  w.sequence_id = sequence_id;
  w.input_indices.reserve(config.context_n);
  for (std::size_t i = 0; i < config.context_n; ++i) w.input_indices.push_back(config.start_j + i * config.gap_g);
  w.target_indices.reserve(config.k_value);
  for (std::size_t i = 0; i < config.k_value; ++i)
    w.target_indices.push_back(config.start_j + (config.context_n + i) * config.gap_g);
  return w;
}

std::vector<WindowSample> enumerate_windows(const SamplerConfig& config, std::size_t sequence_length, std::size_t hop,
                                            const std::string& sequence_id) {
  config.validate();
  require(hop >= 1, ErrorKind::Config, "sampler: hop must be >= 1");
  std::vector<WindowSample> out;
  SamplerConfig c = config;
  for (c.start_j = 0; c.required_length() <= sequence_length; c.start_j += hop)
    out.push_back(sample_window(c, sequence_length, sequence_id));
  return out;
}

}  // namespace cgap2
