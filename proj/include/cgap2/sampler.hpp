#pragma once

// Context/gap windowing over a frame sequence: n input frames spaced g
// apart starting at j, followed by k future targets also spaced g apart.

#include <cstddef>
#include <string>
#include <vector>

namespace cgap2 {

struct SamplerConfig {
  std::size_t context_n = 5;
  std::size_t gap_g = 15;
  std::size_t k_value = 1;
  std::size_t start_j = 0;

  void validate() const;
  /// Shortest sequence that admits a window starting at start_j.
  std::size_t required_length() const { return start_j + (context_n + k_value - 1) * gap_g + 1; }
};

struct WindowSample {
  std::vector<std::size_t> input_indices;
  std::vector<std::size_t> target_indices;
  std::string sequence_id;
};

/// Throws WindowError (carrying the minimal length) when the sequence is too short.
WindowSample sample_window(const SamplerConfig& config, std::size_t sequence_length, const std::string& sequence_id = {});

/// Every valid window with start_j in {0, hop, 2*hop, ...}, in increasing start order.
/// config.start_j is ignored.
std::vector<WindowSample> enumerate_windows(const SamplerConfig& config, std::size_t sequence_length, std::size_t hop = 1,
                                            const std::string& sequence_id = {});

}  // namespace cgap2
