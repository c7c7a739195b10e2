#include "cdiff/models.h"

#include <string>

#include "cdiff/error.h"

namespace cdiff {
namespace {

std::vector<std::size_t> layer_sizes(std::size_t in, const std::vector<std::size_t>& hidden,
                                     std::size_t out) {
  std::vector<std::size_t> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

std::vector<double> to_doubles(const std::vector<std::size_t>& v) {
  return std::vector<double>(v.begin(), v.end());
}

std::vector<std::size_t> to_sizes(const NamedBlock& b) {
  std::vector<std::size_t> out;
  for (double d : b.data) out.push_back(static_cast<std::size_t>(d));
  return out;
}

std::vector<double> bools_to_doubles(const std::vector<bool>& v) {
  std::vector<double> out;
  for (bool b : v) out.push_back(b ? 1.0 : 0.0);
  return out;
}

std::vector<bool> doubles_to_bools(const NamedBlock& b) {
  std::vector<bool> out;
  for (double d : b.data) out.push_back(d != 0.0);
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (state_dim == 0 || action_dim == 0) {
    throw ConfigError("state_dim and action_dim must be positive");
  }
  if (horizon < 1) throw ConfigError("horizon must be >= 1");
  if (embed_dim == 0 || embed_dim % 2 != 0) {
    throw ConfigError("embed_dim must be even and positive");
  }
  if (diffusion_steps < 1) throw ConfigError("diffusion_steps must be >= 1");
  if (latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
}

ModelBundle ModelBundle::init(const ModelConfig& cfg, NormStats norm, Rng& rng) {
  cfg.validate();
  ModelBundle m;
  m.config = cfg;
  m.schedule = DiffusionSchedule::make(cfg.schedule, cfg.diffusion_steps);
  const std::size_t in = cfg.window_size() + cfg.embed_dim;
  m.denoiser = Mlp(layer_sizes(in, cfg.denoiser_hidden, cfg.window_size()),
                   Activation::kLinear, rng);
  m.predictor = ReturnPredictor(
      Mlp(layer_sizes(in, cfg.predictor_hidden, 1), Activation::kLinear, rng),
      cfg.window_size(), cfg.embed_dim);
  m.projector = Projector(cfg.state_dim, cfg.latent_dim, rng);
  m.norm = std::move(norm);
  return m;
}

void write_mlp_blocks(BlockFile& file, const std::string& prefix, const Mlp& net) {
  file.add(prefix + "/sizes", to_doubles(net.sizes()));
  file.add_scalar(prefix + "/output_activation",
                  static_cast<double>(static_cast<int>(net.output_activation())));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const std::string layer = prefix + "/layer" + std::to_string(l);
    file.add(layer + "/weight", {net.sizes()[l + 1], net.sizes()[l]},
             std::vector<double>(net.weight(l).begin(), net.weight(l).end()));
    file.add(layer + "/bias", net.bias(l));
  }
}

void read_mlp_blocks(const BlockFile& file, const std::string& prefix, Mlp& net) {
  const auto sizes = to_sizes(file.get(prefix + "/sizes"));
  const auto act =
      static_cast<Activation>(static_cast<int>(file.scalar(prefix + "/output_activation")));
  net = Mlp::zeros(sizes, act);
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const std::string layer = prefix + "/layer" + std::to_string(l);
    file.copy_to(layer + "/weight", net.weight(l));
    file.copy_to(layer + "/bias", net.bias(l));
  }
}

void ModelBundle::write_blocks(BlockFile& file) const {
  file.add_scalar("config/state_dim", static_cast<double>(config.state_dim));
  file.add_scalar("config/action_dim", static_cast<double>(config.action_dim));
  file.add_scalar("config/horizon", static_cast<double>(config.horizon));
  file.add_scalar("config/embed_dim", static_cast<double>(config.embed_dim));
  file.add("config/denoiser_hidden", to_doubles(config.denoiser_hidden));
  file.add("config/predictor_hidden", to_doubles(config.predictor_hidden));
  file.add_scalar("config/latent_dim", static_cast<double>(config.latent_dim));
  file.add_scalar("config/schedule", config.schedule == ScheduleKind::kLinear ? 0.0 : 1.0);
  file.add_scalar("config/diffusion_steps", static_cast<double>(config.diffusion_steps));
  file.add("schedule/betas", schedule.betas());

  file.add("norm/state_mean", norm.state_mean);
  file.add("norm/state_std", norm.state_std);
  file.add("norm/action_mean", norm.action_mean);
  file.add("norm/action_std", norm.action_std);
  file.add("norm/state_degenerate", bools_to_doubles(norm.state_degenerate));
  file.add("norm/action_degenerate", bools_to_doubles(norm.action_degenerate));
  file.add_scalar("norm/return_min", norm.return_min);
  file.add_scalar("norm/return_max", norm.return_max);
  file.add_scalar("norm/return_degenerate", norm.return_degenerate ? 1.0 : 0.0);

  write_mlp_blocks(file, "denoiser", denoiser);
  write_mlp_blocks(file, "predictor", predictor.net());
  write_mlp_blocks(file, "projector", projector.net());
}

ModelBundle ModelBundle::read_blocks(const BlockFile& file) {
  ModelBundle m;
  ModelConfig& c = m.config;
  c.state_dim = static_cast<std::size_t>(file.scalar("config/state_dim"));
  c.action_dim = static_cast<std::size_t>(file.scalar("config/action_dim"));
  c.horizon = static_cast<std::size_t>(file.scalar("config/horizon"));
  c.embed_dim = static_cast<std::size_t>(file.scalar("config/embed_dim"));
  c.denoiser_hidden = to_sizes(file.get("config/denoiser_hidden"));
  c.predictor_hidden = to_sizes(file.get("config/predictor_hidden"));
  c.latent_dim = static_cast<std::size_t>(file.scalar("config/latent_dim"));
  c.schedule = file.scalar("config/schedule") == 0.0 ? ScheduleKind::kLinear
                                                     : ScheduleKind::kCosine;
  c.diffusion_steps = static_cast<std::size_t>(file.scalar("config/diffusion_steps"));
  c.validate();
  m.schedule = DiffusionSchedule::from_betas(file.get("schedule/betas").data);

  m.norm.state_mean = file.get("norm/state_mean").data;
  m.norm.state_std = file.get("norm/state_std").data;
  m.norm.action_mean = file.get("norm/action_mean").data;
  m.norm.action_std = file.get("norm/action_std").data;
  m.norm.state_degenerate = doubles_to_bools(file.get("norm/state_degenerate"));
  m.norm.action_degenerate = doubles_to_bools(file.get("norm/action_degenerate"));
  m.norm.return_min = file.scalar("norm/return_min");
  m.norm.return_max = file.scalar("norm/return_max");
  m.norm.return_degenerate = file.scalar("norm/return_degenerate") != 0.0;

  read_mlp_blocks(file, "denoiser", m.denoiser);
  Mlp pred;
  read_mlp_blocks(file, "predictor", pred);
  m.predictor = ReturnPredictor(std::move(pred), c.window_size(), c.embed_dim);
  Mlp proj;
  read_mlp_blocks(file, "projector", proj);
  m.projector = Projector(std::move(proj));
  if (m.denoiser.in_dim() != c.window_size() + c.embed_dim ||
      m.denoiser.out_dim() != c.window_size()) {
    throw DimensionError("checkpoint denoiser does not match its configuration");
  }
  return m;
}

}  // namespace cdiff
