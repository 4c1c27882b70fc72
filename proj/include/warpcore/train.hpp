#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <json.hpp>

#include "warpcore/data.hpp"
#include "warpcore/model.hpp"

namespace warpcore {

struct TrainOptions {
  int steps = 2000;
  int batch = 4;
  double lr = 1e-4;
  std::uint64_t seed = 0;  ///< batch order
  int log_every = 10;
};

struct LogEntry {
  int step = 0;
  double loss = 0.0;
};

/// Called after every logged step.
using TrainCallback = std::function<void(const LogEntry&)>;

/// Adam on masked L1. Batches are drawn from shuffled epochs of `examples`.
/// Logs the batch loss at step 1 and every log_every steps.
std::vector<LogEntry> train(nn::ParamStore& params, const ModelConfig& cfg,
                            const std::vector<TrainExample>& examples, const TrainOptions& opt,
                            const TrainCallback& on_log = {});

nlohmann::json log_to_json(const std::vector<LogEntry>& log);

struct ValidationScore {
  double mean_mpsnr = 0.0;       ///< model
  double mean_bicubic = 0.0;     ///< bicubic-warp baseline on the same mask
  std::vector<double> per_sample;
};

/// Mean mPSNR of the model and of the bicubic baseline over the examples,
/// both clamped to [0, 1] and scored on the same mask.
ValidationScore validate(const nn::ParamStore& params, const ModelConfig& cfg,
                         const std::vector<TrainExample>& examples);

/// model.json next to weights.bin.
void save_model(const std::filesystem::path& dir, const nn::ParamStore& params,
                const ModelConfig& cfg);
/// Accepts a directory holding model.json + weights.bin, or a weights file
/// with model.json beside it. Throws IoError, UnsupportedFormat,
/// InvalidParams.
std::pair<ModelConfig, nn::ParamStore> load_model(const std::filesystem::path& path);

}  // namespace warpcore
