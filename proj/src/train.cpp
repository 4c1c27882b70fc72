#include "warpcore/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "warpcore/error.hpp"
#include "warpcore/fileutil.hpp"
#include "warpcore/metrics.hpp"
#include "warpcore/nn/ops.hpp"
#include "warpcore/nn/optim.hpp"

namespace warpcore {

namespace fs = std::filesystem;

namespace {

Plane clamped(Plane p) {
  for (double& v : p.data()) v = std::clamp(v, 0.0, 1.0);
  return p;
}

}  // namespace

std::vector<LogEntry> train(nn::ParamStore& params, const ModelConfig& cfg,
                            const std::vector<TrainExample>& examples, const TrainOptions& opt,
                            const TrainCallback& on_log) {
  if (examples.empty()) throw Error(ErrorKind::kInvalidParams, "train: no examples");
  if (opt.batch < 1 || opt.steps < 0 || opt.log_every < 1) {
    throw Error(ErrorKind::kInvalidParams, "train: bad options");
  }
  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  nn::AdamState adam;
  adam.lr = opt.lr;
  std::vector<LogEntry> log;
  for (int step = 1; step <= opt.steps; ++step) {
    std::vector<const TrainExample*> batch;
    for (int b = 0; b < opt.batch; ++b) {
      if (cursor == order.size()) {
        // Fisher-Yates with our own uniform draw so the order is portable.
        for (std::size_t i = order.size() - 1; i > 0; --i) {
          const auto j = std::min(i, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i + 1)));
          std::swap(order[i], order[j]);
        }
        cursor = 0;
      }
      batch.push_back(&examples[order[cursor++]]);
    }
    const double loss = train_step(params, cfg, batch, adam);
    if (step == 1 || step % opt.log_every == 0) {
      log.push_back({step, loss});
      if (on_log) on_log(log.back());
    }
  }
  return log;
}

nlohmann::json log_to_json(const std::vector<LogEntry>& log) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& e : log) j.push_back({{"step", e.step}, {"loss", e.loss}});
  return j;
}

ValidationScore validate(const nn::ParamStore& params, const ModelConfig& cfg,
                         const std::vector<TrainExample>& examples) {
  if (examples.empty()) throw Error(ErrorKind::kInvalidParams, "validate: no examples");
  ValidationScore s;
  for (const auto& ex : examples) {
    const WarpGeometry geo = prepare_geometry(ex.lr, ex.map, ex.hr.dims());
    Mask m = geo.mask;
    for (std::size_t k = 0; k < m.size(); ++k) m[k] &= ex.mask[k];

    nn::Graph g;
    const nn::Var in = g.constant(nn::to_tensor(ex.lr));
    const ForwardOutput out = forward(g, params, cfg, in, geo);
    const double model = mpsnr(clamped(nn::to_plane(g.value(out.image))), ex.hr, m);
    const double bic = mpsnr(clamped(nn::to_plane(geo.bicubic)), ex.hr, m);
    s.per_sample.push_back(model);
    s.mean_mpsnr += model;
    s.mean_bicubic += bic;
  }
  s.mean_mpsnr /= static_cast<double>(examples.size());
  s.mean_bicubic /= static_cast<double>(examples.size());
  return s;
}

void save_model(const fs::path& dir, const nn::ParamStore& params, const ModelConfig& cfg) {
  check_params(params, cfg);
  nn::save_weights(params, dir / "weights.bin");
  write_file_atomic(dir / "model.json", config_to_json(cfg).dump(2) + "\n");
}

std::pair<ModelConfig, nn::ParamStore> load_model(const fs::path& path) {
  const bool is_dir = fs::is_directory(path);
  const fs::path weights = is_dir ? path / "weights.bin" : path;
  const fs::path manifest = (is_dir ? path : path.parent_path()) / "model.json";
  const auto j = nlohmann::json::parse(read_file(manifest), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::kUnsupportedFormat, manifest.string() + " is not JSON");
  const ModelConfig cfg = config_from_json(j);
  nn::ParamStore params = nn::load_weights(weights);
  check_params(params, cfg);
  return {cfg, std::move(params)};
}

}  // namespace warpcore
