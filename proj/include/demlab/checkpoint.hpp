#pragma once

// Cumulative per-checkpoint summaries of one experiment variant and metric.
// Shared between the sequential monitors (replay) and the CSV layer.

#include <string>
#include <vector>

#include "demlab/common.hpp"

namespace demlab {

struct CheckpointRow {
  long long time_index = 0;  // checkpoint ordinal
  long long count_c = 0;     // cumulative observation count
  double mean_c = 0.0;       // cumulative mean
  double variance_c = 0.0;   // cumulative sample variance
};

struct CheckpointSeries {
  std::string experiment_id;
  std::string variant_id;
  std::string metric_id;
  std::vector<CheckpointRow> rows;

  /// Enforces strictly increasing time indexes and non-decreasing cumulative
  /// counts; names the offending row on failure.
  void validate() const {
    if (rows.empty()) {
      throw input_error("checkpoint series " + experiment_id + "/" + variant_id + "/" +
                        metric_id + ": no rows");
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].count_c < 0) {
        throw input_error("checkpoint series " + experiment_id + "/" + variant_id +
                          ": negative count at row " + std::to_string(i + 1));
      }
      if (i > 0) {
        if (rows[i].time_index <= rows[i - 1].time_index) {
          throw input_error("checkpoint series " + experiment_id + "/" + variant_id +
                            ": time_index not increasing at row " + std::to_string(i + 1));
        }
        if (rows[i].count_c < rows[i - 1].count_c) {
          throw input_error("checkpoint series " + experiment_id + "/" + variant_id +
                            ": cumulative count decreases at row " + std::to_string(i + 1));
        }
      }
    }
  }
};

}  // namespace demlab
