#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "refldiff/geometry.hpp"
#include "refldiff/network.hpp"
#include "refldiff/schedule.hpp"
#include "refldiff/training.hpp"

namespace refldiff {

// Binary layout, all integers and floats little-endian:
//   char[8]  magic "RFLDCKPT"
//   u32      version (1)
//   u32      domain kind (0 interval, 1 hypercube, 2 simplex), u32 domain dim
//   i32 x 4  input_dim, embed_dim, hidden_width, hidden_layers; u32 scale_by_sigma
//   f64 x 3  sigma0, sigma1, t_min
//   f64 x 6  learning_rate, ema_rate, beta1, beta2, adam_eps, smoothed_loss
//   i32      batch_size, i32 total_steps, u64 seed, i64 step
//   u64      n (parameter count)
//   f64 x n  parameters, then EMA parameters, Adam first moment, Adam second moment
struct Checkpoint {
  Domain domain = Domain::interval();
  NetworkShape shape;
  NoiseSchedule schedule = NoiseSchedule::sample_quality();
  TrainConfig train;
  double smoothed_loss = 0.0;
  std::int64_t step = 0;
  std::vector<double> parameters;
  std::vector<double> ema_parameters;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Checkpoint snapshot(Trainer& trainer, const Domain& domain, double smoothed_loss);
// Rebuilds a trainer whose next step is bit-identical to the saved run's.
Trainer restore_trainer(const Checkpoint& ckpt);

// Written to a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace refldiff
