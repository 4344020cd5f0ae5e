#pragma once

#include <json.hpp>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "flashe/cipher.hpp"
#include "flashe/codec.hpp"
#include "flashe/plan.hpp"
#include "flashe/sparse.hpp"

namespace flashe::sim {

struct BandwidthMatrix {
  std::vector<std::string> sites;
  std::vector<std::vector<double>> mbps;  // ordered pairs; diagonal entries are LAN

  // Five-site fixture: tail link 40 Mb/s, LAN/WAN mean ratio exactly 120.
  static BandwidthMatrix aws_five_site();
  void validate() const;
  double lan_mean() const;
  double wan_mean() const;
  double wan_min() const;
  nlohmann::json to_json() const;
  static BandwidthMatrix from_json(const nlohmann::json& j);
};

// seconds = bytes_up*8/bw(client->server) + bytes_down*8/bw(server->client), bw in Mb/s.
double simulate_comm(uint64_t bytes_up, uint64_t bytes_down, uint32_t client_site, uint32_t server_site,
                     const BandwidthMatrix& bw);

enum class Policy { Double, Single, Adaptive };
std::string to_string(Policy p);

struct PricingConfig {
  double instance_per_hour = 0.68;
  double egress_per_gb = 0.09;
  uint32_t instances = 0;  // 0 lets the config default it to clients + 1
};

struct FederationConfig {
  uint32_t clients = 4;
  std::vector<uint64_t> layers = {1024};
  uint32_t rounds = 3;
  Policy policy = Policy::Adaptive;
  std::vector<std::pair<uint32_t, double>> sparsity;  // (first round, s%); empty = dense
  double dropout_rate = 0.0;
  uint8_t modulus_bits = 32;
  unsigned quant_bits = 16;
  codec::ClipConfig clip;
  double update_sigma = 0.01;
  sparse::Normalize normalize = sparse::Normalize::Mean;
  bool precompute = true;
  double prf_blocks_per_sec = 5e6;  // deterministic idle-window work model
  uint64_t cache_capacity_blocks = kDefaultCacheCapacityBlocks;
  PricingConfig pricing;
  BandwidthMatrix bandwidth = BandwidthMatrix::aws_five_site();
  std::vector<uint32_t> client_site;  // defaults to client % sites
  uint32_t server_site = 0;
  uint64_t seed = 42;

  uint64_t coords() const;
  double sparsity_for_round(uint32_t round) const;  // 0 means dense
  void validate() const;
  static FederationConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

struct ClientRound {
  uint32_t client = 0;
  bool survived = false;
  double enc_s = 0.0, dec_s = 0.0;
  uint64_t up_bytes = 0, down_bytes = 0;
  double comm_s = 0.0;
};

struct RoundReport {
  uint32_t round = 0;
  bool aborted = false;  // every client dropped
  std::string scheme = "-";
  bool sparse = false;
  double s_percent = 0.0;
  double alpha = 0.0;
  std::vector<ClientRound> clients;
  uint64_t up_bytes_total = 0, down_bytes_total = 0;
  double comm_s = 0.0;  // synchronous round: max over survivors
  double server_agg_s = 0.0, enc_s_total = 0.0, dec_s_total = 0.0;
  uint64_t on_path_aes_blocks = 0, lane_evals = 0;
  uint64_t masks_planned = 0;
  bool oracle_ok = true;
  codec::RoundStats global_stats;  // summary of the decoded global update
  double idle_s = 0.0, precompute_s = 0.0;
  bool precompute_hidden = false;
  uint64_t precomputed_blocks = 0;
  double round_cost_usd = 0.0;

  nlohmann::json to_json() const;
  // The deterministic subset: wall-clock-derived fields removed.
  nlohmann::json stable_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

class Simulation {
 public:
  explicit Simulation(FederationConfig cfg);

  RoundReport run_round();
  std::vector<RoundReport> run_all();
  uint32_t next_round() const { return round_; }
  const FederationConfig& config() const { return cfg_; }

 private:
  void prepare_next(double idle_s);

  FederationConfig cfg_;
  SecretKey key_;
  std::array<uint8_t, 32> perm_secret_{};
  uint32_t round_ = 1;
  std::vector<std::vector<double>> residuals_;
  codec::ClipHistory history_;
  MaskCache cache_;
  bool have_cache_ = false;
  uint64_t cached_blocks_ = 0;
  double pending_idle_s_ = 0.0, pending_precompute_s_ = 0.0;
};

struct CostProjection {
  double compute_usd = 0.0;
  double egress_usd = 0.0;
  double total_usd = 0.0;
};

// Projects mean per-round wall time and traffic across a full training span.
CostProjection project_cost(const std::vector<RoundReport>& reports, uint32_t rounds_to_convergence,
                            const PricingConfig& pricing);

}  // namespace flashe::sim
