#include "flashe/sim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "flashe/error.hpp"
#include "flashe/rng.hpp"

namespace flashe::sim {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Policy policy_from_string(const std::string& s) {
  if (s == "double") return Policy::Double;
  if (s == "single") return Policy::Single;
  if (s == "adaptive") return Policy::Adaptive;
  fail(ErrorCode::Parse, "unknown policy: " + s);
}

sparse::Normalize normalize_from_string(const std::string& s) {
  if (s == "sum") return sparse::Normalize::Sum;
  if (s == "mean") return sparse::Normalize::Mean;
  fail(ErrorCode::Parse, "unknown normalize mode: " + s);
}

std::string normalize_to_string(sparse::Normalize n) {
  return n == sparse::Normalize::Sum ? "sum" : "mean";
}

}  // namespace

std::string to_string(Policy p) {
  switch (p) {
    case Policy::Double: return "double";
    case Policy::Single: return "single";
    default: return "adaptive";
  }
}

BandwidthMatrix BandwidthMatrix::aws_five_site() {
  BandwidthMatrix bw;
  bw.sites = {"london", "tokyo", "ohio", "ncal", "sydney"};
  bw.mbps = {
      {9600, 60, 110, 90, 40},   //
      {55, 9600, 75, 90, 85},    //
      {105, 70, 9600, 145, 55},  //
      {85, 85, 140, 9600, 70},   //
      {40, 80, 50, 70, 9600},    //
  };
  return bw;
}

void BandwidthMatrix::validate() const {
  if (sites.empty()) fail(ErrorCode::InvalidArgument, "bandwidth matrix needs at least one site");
  if (mbps.size() != sites.size()) fail(ErrorCode::InvalidArgument, "bandwidth matrix row count mismatch");
  for (const auto& row : mbps) {
    if (row.size() != sites.size()) fail(ErrorCode::InvalidArgument, "bandwidth matrix is not square");
    for (double v : row)
      if (!(std::isfinite(v) && v > 0.0)) fail(ErrorCode::InvalidArgument, "bandwidth must be positive");
  }
}

double BandwidthMatrix::lan_mean() const {
  double sum = 0.0;
  for (size_t i = 0; i < mbps.size(); ++i) sum += mbps[i][i];
  return mbps.empty() ? 0.0 : sum / static_cast<double>(mbps.size());
}

double BandwidthMatrix::wan_mean() const {
  double sum = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < mbps.size(); ++i)
    for (size_t j = 0; j < mbps.size(); ++j)
      if (i != j) {
        sum += mbps[i][j];
        ++n;
      }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double BandwidthMatrix::wan_min() const {
  double best = 0.0;
  bool first = true;
  for (size_t i = 0; i < mbps.size(); ++i)
    for (size_t j = 0; j < mbps.size(); ++j)
      if (i != j && (first || mbps[i][j] < best)) {
        best = mbps[i][j];
        first = false;
      }
  return best;
}

nlohmann::json BandwidthMatrix::to_json() const { return {{"sites", sites}, {"mbps", mbps}}; }

BandwidthMatrix BandwidthMatrix::from_json(const nlohmann::json& j) {
  BandwidthMatrix bw;
  bw.sites = j.at("sites").get<std::vector<std::string>>();
  bw.mbps = j.at("mbps").get<std::vector<std::vector<double>>>();
  bw.validate();
  return bw;
}

double simulate_comm(uint64_t bytes_up, uint64_t bytes_down, uint32_t client_site, uint32_t server_site,
                     const BandwidthMatrix& bw) {
  bw.validate();
  if (client_site >= bw.sites.size() || server_site >= bw.sites.size())
    fail(ErrorCode::InvalidArgument, "site index out of range");
  double up = static_cast<double>(bytes_up) * 8.0 / (bw.mbps[client_site][server_site] * 1e6);
  double down = static_cast<double>(bytes_down) * 8.0 / (bw.mbps[server_site][client_site] * 1e6);
  return up + down;
}

uint64_t FederationConfig::coords() const {
  uint64_t d = 0;
  for (uint64_t l : layers) d += l;
  return d;
}

double FederationConfig::sparsity_for_round(uint32_t round) const {
  double s = 0.0;
  for (const auto& [start, pct] : sparsity)
    if (round >= start) s = pct;
  return s;
}

void FederationConfig::validate() const {
  if (clients < 1) fail(ErrorCode::InvalidArgument, "need at least 1 client");
  if (clients >= UINT32_MAX - 1) fail(ErrorCode::InvalidArgument, "too many clients");
  if (layers.empty()) fail(ErrorCode::InvalidArgument, "need at least one layer");
  for (uint64_t l : layers)
    if (l < 1) fail(ErrorCode::InvalidArgument, "layer sizes must be positive");
  if (coords() > kMaxCoordinate) fail(ErrorCode::InvalidArgument, "model too large");
  if (rounds < 1) fail(ErrorCode::InvalidArgument, "need at least 1 round");
  uint32_t prev = 0;
  for (const auto& [start, pct] : sparsity) {
    if (start < 1 || start <= prev) fail(ErrorCode::InvalidArgument, "sparsity schedule rounds must ascend");
    if (!(pct > 0.0 && pct <= 100.0)) fail(ErrorCode::InvalidArgument, "sparsity percent in (0, 100]");
    prev = start;
  }
  if (!(dropout_rate >= 0.0 && dropout_rate <= 1.0)) fail(ErrorCode::InvalidArgument, "dropout rate in [0,1]");
  SchemeParams sp{modulus_bits};
  sp.validate();
  codec::QuantParams qp{1.0, quant_bits};
  qp.validate();
  // Exact aggregation requires the summed codes to stay below the modulus.
  unsigned __int128 worst = static_cast<unsigned __int128>(clients) * qp.levels();
  if (worst > static_cast<unsigned __int128>(sp.residue_mask()))
    fail(ErrorCode::InvalidArgument, "quantized sums can wrap: lower quant_bits or raise modulus_bits");
  if (!(std::isfinite(update_sigma) && update_sigma >= 0.0))
    fail(ErrorCode::InvalidArgument, "update sigma must be nonnegative");
  if (!(std::isfinite(clip.bootstrap) && clip.bootstrap > 0.0))
    fail(ErrorCode::InvalidArgument, "clip bootstrap must be positive");
  if (!(std::isfinite(clip.clip_factor) && clip.clip_factor > 0.0))
    fail(ErrorCode::InvalidArgument, "clip factor must be positive");
  if (!(std::isfinite(prf_blocks_per_sec) && prf_blocks_per_sec >= 0.0))
    fail(ErrorCode::InvalidArgument, "prf_blocks_per_sec must be nonnegative");
  if (!(std::isfinite(pricing.instance_per_hour) && pricing.instance_per_hour >= 0.0) ||
      !(std::isfinite(pricing.egress_per_gb) && pricing.egress_per_gb >= 0.0))
    fail(ErrorCode::InvalidArgument, "pricing rates must be nonnegative");
  bandwidth.validate();
  if (server_site >= bandwidth.sites.size()) fail(ErrorCode::InvalidArgument, "server site out of range");
  if (!client_site.empty()) {
    if (client_site.size() != clients) fail(ErrorCode::InvalidArgument, "client_site must list every client");
    for (uint32_t s : client_site)
      if (s >= bandwidth.sites.size()) fail(ErrorCode::InvalidArgument, "client site out of range");
  }
}

FederationConfig FederationConfig::from_json(const nlohmann::json& j) {
  FederationConfig cfg;
  cfg.clients = j.value("clients", cfg.clients);
  if (j.contains("layers")) cfg.layers = j.at("layers").get<std::vector<uint64_t>>();
  cfg.rounds = j.value("rounds", cfg.rounds);
  if (j.contains("policy")) cfg.policy = policy_from_string(j.at("policy").get<std::string>());
  if (j.contains("sparsity")) {
    cfg.sparsity.clear();
    for (const auto& e : j.at("sparsity"))
      cfg.sparsity.emplace_back(e.at(0).get<uint32_t>(), e.at(1).get<double>());
  }
  cfg.dropout_rate = j.value("dropout_rate", cfg.dropout_rate);
  cfg.modulus_bits = j.value("modulus_bits", cfg.modulus_bits);
  cfg.quant_bits = j.value("quant_bits", cfg.quant_bits);
  if (j.contains("clip")) {
    const auto& c = j.at("clip");
    cfg.clip.bootstrap = c.value("bootstrap", cfg.clip.bootstrap);
    cfg.clip.clip_factor = c.value("clip_factor", cfg.clip.clip_factor);
  }
  cfg.update_sigma = j.value("update_sigma", cfg.update_sigma);
  if (j.contains("normalize")) cfg.normalize = normalize_from_string(j.at("normalize").get<std::string>());
  cfg.precompute = j.value("precompute", cfg.precompute);
  cfg.prf_blocks_per_sec = j.value("prf_blocks_per_sec", cfg.prf_blocks_per_sec);
  cfg.cache_capacity_blocks = j.value("cache_capacity_blocks", cfg.cache_capacity_blocks);
  if (j.contains("pricing")) {
    const auto& p = j.at("pricing");
    cfg.pricing.instance_per_hour = p.value("instance_per_hour", cfg.pricing.instance_per_hour);
    cfg.pricing.egress_per_gb = p.value("egress_per_gb", cfg.pricing.egress_per_gb);
    cfg.pricing.instances = p.value("instances", cfg.pricing.instances);
  }
  if (j.contains("bandwidth")) cfg.bandwidth = BandwidthMatrix::from_json(j.at("bandwidth"));
  if (j.contains("client_site")) cfg.client_site = j.at("client_site").get<std::vector<uint32_t>>();
  cfg.server_site = j.value("server_site", cfg.server_site);
  cfg.seed = j.value("seed", cfg.seed);
  if (cfg.pricing.instances == 0) cfg.pricing.instances = cfg.clients + 1;
  cfg.validate();
  return cfg;
}

nlohmann::json FederationConfig::to_json() const {
  nlohmann::json j;
  j["clients"] = clients;
  j["layers"] = layers;
  j["rounds"] = rounds;
  j["policy"] = sim::to_string(policy);
  auto sched = nlohmann::json::array();
  for (const auto& [start, pct] : sparsity) sched.push_back({start, pct});
  j["sparsity"] = sched;
  j["dropout_rate"] = dropout_rate;
  j["modulus_bits"] = modulus_bits;
  j["quant_bits"] = quant_bits;
  j["clip"] = {{"bootstrap", clip.bootstrap}, {"clip_factor", clip.clip_factor}};
  j["update_sigma"] = update_sigma;
  j["normalize"] = normalize_to_string(normalize);
  j["precompute"] = precompute;
  j["prf_blocks_per_sec"] = prf_blocks_per_sec;
  j["cache_capacity_blocks"] = cache_capacity_blocks;
  j["pricing"] = {{"instance_per_hour", pricing.instance_per_hour},
                  {"egress_per_gb", pricing.egress_per_gb},
                  {"instances", pricing.instances}};
  j["bandwidth"] = bandwidth.to_json();
  j["client_site"] = client_site;
  j["server_site"] = server_site;
  j["seed"] = seed;
  return j;
}

nlohmann::json RoundReport::stable_json() const {
  nlohmann::json j;
  j["round"] = round;
  j["aborted"] = aborted;
  j["scheme"] = scheme;
  j["sparse"] = sparse;
  j["s_percent"] = s_percent;
  j["alpha"] = alpha;
  j["up_bytes_total"] = up_bytes_total;
  j["down_bytes_total"] = down_bytes_total;
  j["comm_s"] = comm_s;
  j["on_path_aes_blocks"] = on_path_aes_blocks;
  j["lane_evals"] = lane_evals;
  j["masks_planned"] = masks_planned;
  j["oracle_ok"] = oracle_ok;
  j["global_mean"] = global_stats.mean;
  j["global_std"] = global_stats.stddev;
  j["global_max_abs"] = global_stats.max_abs;
  j["idle_s"] = idle_s;
  j["precomputed_blocks"] = precomputed_blocks;
  auto arr = nlohmann::json::array();
  for (const auto& c : clients)
    arr.push_back({{"client", c.client},
                   {"survived", c.survived},
                   {"up_bytes", c.up_bytes},
                   {"down_bytes", c.down_bytes},
                   {"comm_s", c.comm_s}});
  j["clients"] = arr;
  return j;
}

nlohmann::json RoundReport::to_json() const {
  nlohmann::json j = stable_json();
  j["enc_s_total"] = enc_s_total;
  j["dec_s_total"] = dec_s_total;
  j["server_agg_s"] = server_agg_s;
  j["precompute_s"] = precompute_s;
  j["precompute_hidden"] = precompute_hidden;
  j["round_cost_usd"] = round_cost_usd;
  for (size_t i = 0; i < clients.size(); ++i) {
    j["clients"][i]["enc_s"] = clients[i].enc_s;
    j["clients"][i]["dec_s"] = clients[i].dec_s;
  }
  return j;
}

std::string RoundReport::csv_header() {
  return "round,aborted,scheme,sparse,s_percent,alpha,survivors,up_bytes_total,down_bytes_total,comm_s,"
         "enc_s_total,dec_s_total,server_agg_s,on_path_aes_blocks,lane_evals,masks_planned,oracle_ok,"
         "idle_s,precompute_s,precompute_hidden,precomputed_blocks,round_cost_usd";
}

std::string RoundReport::csv_row() const {
  size_t survivors = 0;
  for (const auto& c : clients)
    if (c.survived) ++survivors;
  std::ostringstream oss;
  oss << round << ',' << (aborted ? 1 : 0) << ',' << scheme << ',' << (sparse ? 1 : 0) << ',' << s_percent
      << ',' << alpha << ',' << survivors << ',' << up_bytes_total << ',' << down_bytes_total << ','
      << comm_s << ',' << enc_s_total << ',' << dec_s_total << ',' << server_agg_s << ','
      << on_path_aes_blocks << ',' << lane_evals << ',' << masks_planned << ',' << (oracle_ok ? 1 : 0)
      << ',' << idle_s << ',' << precompute_s << ',' << (precompute_hidden ? 1 : 0) << ','
      << precomputed_blocks << ',' << round_cost_usd;
  return oss.str();
}

Simulation::Simulation(FederationConfig cfg)
    : cfg_(std::move(cfg)),
      key_(SecretKey::from_seed(rng::derive_seed(cfg_.seed, 0x6b65790000000001ull),
                                SchemeParams{cfg_.modulus_bits})),
      residuals_(cfg_.clients) {
  cfg_.validate();
  uint64_t state = rng::derive_seed(cfg_.seed, 0x7065726d00000001ull);
  for (size_t i = 0; i < perm_secret_.size(); i += 8) {
    uint64_t w = rng::splitmix64(state);
    for (size_t k = 0; k < 8; ++k) perm_secret_[i + k] = static_cast<uint8_t>(w >> (8 * k));
  }
}

RoundReport Simulation::run_round() {
  if (round_ > cfg_.rounds) fail(ErrorCode::InvalidArgument, "simulation already finished");

  RoundReport rep;
  rep.round = round_;
  rep.idle_s = pending_idle_s_;
  rep.precompute_s = pending_precompute_s_;
  rep.precompute_hidden = have_cache_ && pending_precompute_s_ <= pending_idle_s_;
  rep.precomputed_blocks = have_cache_ ? cached_blocks_ : 0;

  const uint64_t coords = cfg_.coords();
  const uint64_t rmask = key_.params().residue_mask();

  rng::Engine drop(rng::derive_seed(cfg_.seed ^ 0xD50FF00Dull, round_));
  std::vector<uint32_t> survivors;
  rep.clients.resize(cfg_.clients);
  for (uint32_t j = 1; j <= cfg_.clients; ++j) {
    bool alive = !drop.bernoulli(cfg_.dropout_rate);
    rep.clients[j - 1].client = j;
    rep.clients[j - 1].survived = alive;
    if (alive) survivors.push_back(j);
  }

  double s_pct = cfg_.sparsity_for_round(round_);
  rep.sparse = s_pct > 0.0;
  rep.s_percent = s_pct;

  if (survivors.empty()) {
    rep.aborted = true;
    rep.scheme = "-";
    prepare_next(0.0);
    return rep;
  }
  const auto n_surv = static_cast<uint32_t>(survivors.size());

  rep.alpha = codec::fit_clip_threshold(history_, cfg_.quant_bits, cfg_.clip);
  codec::QuantParams qp{rep.alpha, cfg_.quant_bits};

  std::vector<std::vector<double>> updates(survivors.size());
  for (size_t i = 0; i < survivors.size(); ++i) {
    rng::Engine eng(rng::derive_seed(cfg_.seed, (uint64_t{round_} << 32) | survivors[i]));
    updates[i].resize(coords);
    for (auto& v : updates[i]) v = eng.gaussian(0.0, cfg_.update_sigma);
  }

  // Positional masks (index = client - 1, dropped clients all-zero) so the
  // planner sees true client adjacency.
  std::vector<std::vector<uint8_t>> masks_by_pos(cfg_.clients, std::vector<uint8_t>(coords, 0));
  std::vector<uint32_t> perm;
  std::vector<sparse::Mask> pmasks(survivors.size());
  std::vector<std::vector<uint64_t>> qvals(survivors.size());

  if (rep.sparse) {
    perm = sparse::permutation_indices(coords, {perm_secret_, round_});
    for (size_t i = 0; i < survivors.size(); ++i) {
      uint32_t j = survivors[i];
      sparse::LayeredUpdate lu;
      lu.round = round_;
      lu.client = j;
      size_t off = 0;
      for (uint64_t len : cfg_.layers) {
        lu.layers.emplace_back(updates[i].begin() + off, updates[i].begin() + off + len);
        off += len;
      }
      sparse::SparseUpdate su = sparse::topk_sparsify(lu, residuals_[j - 1], s_pct);
      residuals_[j - 1] = std::move(su.residual);
      std::vector<double> dense = sparse::expand(su.mask, su.values);
      pmasks[i] = sparse::permute(su.mask, perm);
      std::vector<double> pvals = sparse::compact(pmasks[i], sparse::permute(dense, perm));
      qvals[i] = codec::quantize(pvals, qp);
      masks_by_pos[j - 1] = pmasks[i];
    }
  } else {
    for (size_t i = 0; i < survivors.size(); ++i) {
      qvals[i] = codec::quantize(updates[i], qp);
      masks_by_pos[survivors[i] - 1].assign(coords, 1);
    }
  }

  plan::Scheme scheme;
  switch (cfg_.policy) {
    case Policy::Double: scheme = plan::Scheme::Double; break;
    case Policy::Single: scheme = plan::Scheme::Single; break;
    default: scheme = plan::decide_masking(masks_by_pos, n_surv); break;
  }
  rep.scheme = plan::to_string(scheme);
  plan::MaskingCosts costs = plan::masking_costs(masks_by_pos, n_surv);
  rep.masks_planned = scheme == plan::Scheme::Double ? costs.cost_double : costs.cost_single;

  reset_prf_counters();
  const MaskCache* cache = have_cache_ ? &cache_ : nullptr;

  std::vector<double> global;
  size_t down_per_client = 0;
  std::vector<size_t> up_bytes(survivors.size());

  if (!rep.sparse) {
    std::vector<Ciphertext> cts(survivors.size());
    for (size_t i = 0; i < survivors.size(); ++i) {
      auto t0 = std::chrono::steady_clock::now();
      cts[i] = scheme == plan::Scheme::Double
                   ? encrypt_double(key_, round_, survivors[i], qvals[i], cache)
                   : encrypt_single(key_, round_, survivors[i], qvals[i], cache);
      double dt = seconds_since(t0);
      rep.clients[survivors[i] - 1].enc_s = dt;
      rep.enc_s_total += dt;
      up_bytes[i] = serialize(cts[i]).size();
    }

    auto t0 = std::chrono::steady_clock::now();
    Ciphertext agg = cts[0];
    for (size_t i = 1; i < cts.size(); ++i) agg = hom_add(agg, cts[i]);
    rep.server_agg_s = seconds_since(t0);
    down_per_client = serialize(agg).size();

    std::vector<uint64_t> dec;
    for (size_t i = 0; i < survivors.size(); ++i) {
      auto t1 = std::chrono::steady_clock::now();
      std::vector<uint64_t> out = scheme == plan::Scheme::Double ? decrypt_double(key_, agg, cache)
                                                                 : decrypt_single(key_, agg, cache);
      double dt = seconds_since(t1);
      rep.clients[survivors[i] - 1].dec_s = dt;
      rep.dec_s_total += dt;
      if (i == 0)
        dec = std::move(out);
      else if (out != dec)
        rep.oracle_ok = false;
    }

    PrfCounters ctr = prf_counters();
    rep.on_path_aes_blocks = ctr.aes_blocks;
    rep.lane_evals = ctr.lane_evals;

    std::vector<uint64_t> oracle(coords, 0);
    for (size_t i = 0; i < survivors.size(); ++i)
      for (uint64_t d = 0; d < coords; ++d) oracle[d] = (oracle[d] + qvals[i][d]) & rmask;
    if (dec != oracle) rep.oracle_ok = false;

    std::vector<uint32_t> counts(coords, n_surv);
    std::vector<double> decoded(coords);
    for (uint64_t d = 0; d < coords; ++d) decoded[d] = codec::dequantize_sum(dec[d], n_surv, qp);
    global = sparse::normalize(decoded, counts, cfg_.normalize);
  } else {
    std::vector<sparse::CompactCiphertext> cts(survivors.size());
    for (size_t i = 0; i < survivors.size(); ++i) {
      auto t0 = std::chrono::steady_clock::now();
      cts[i] = sparse::encrypt_compact(key_, round_, survivors[i], pmasks[i], qvals[i], scheme, cache);
      double dt = seconds_since(t0);
      rep.clients[survivors[i] - 1].enc_s = dt;
      rep.enc_s_total += dt;
      up_bytes[i] = sparse::sparse_uplink_bytes(cts[i], pmasks[i]);
    }

    std::vector<std::pair<sparse::Mask, sparse::CompactCiphertext>> inputs;
    inputs.reserve(survivors.size());
    for (size_t i = 0; i < survivors.size(); ++i) inputs.emplace_back(pmasks[i], cts[i]);
    auto t0 = std::chrono::steady_clock::now();
    sparse::AlignedAggregate agg = sparse::aggregate_aligned(inputs);
    rep.server_agg_s = seconds_since(t0);

    // Downlink: aggregate frame plus every survivor's support bitmask, so each
    // client can rebuild S_d.
    down_per_client = sparse::serialize_compact(agg.sum).size();
    for (size_t i = 0; i < survivors.size(); ++i)
      down_per_client += sparse::pack_bitmask(pmasks[i]).size();

    std::vector<std::pair<uint32_t, sparse::Mask>> cmasks;
    cmasks.reserve(survivors.size());
    for (size_t i = 0; i < survivors.size(); ++i) cmasks.emplace_back(survivors[i], pmasks[i]);

    std::vector<double> decoded;
    for (size_t i = 0; i < survivors.size(); ++i) {
      auto t1 = std::chrono::steady_clock::now();
      std::vector<double> out =
          sparse::decrypt_sparse(key_, agg.sum, cmasks, agg.counts, scheme, qp, cache);
      double dt = seconds_since(t1);
      rep.clients[survivors[i] - 1].dec_s = dt;
      rep.dec_s_total += dt;
      if (i == 0)
        decoded = std::move(out);
      else if (out != decoded)
        rep.oracle_ok = false;
    }

    PrfCounters ctr = prf_counters();
    rep.on_path_aes_blocks = ctr.aes_blocks;
    rep.lane_evals = ctr.lane_evals;

    std::vector<uint64_t> oq(coords, 0);
    for (size_t i = 0; i < survivors.size(); ++i) {
      size_t v = 0;
      for (uint64_t d = 0; d < coords; ++d)
        if (pmasks[i][d]) oq[d] = (oq[d] + qvals[i][v++]) & rmask;
    }
    for (uint64_t d = 0; d < coords; ++d) {
      double expect = agg.counts[d] == 0 ? 0.0 : codec::dequantize_sum(oq[d], agg.counts[d], qp);
      if (decoded[d] != expect) rep.oracle_ok = false;
    }

    global = sparse::normalize(decoded, agg.counts, cfg_.normalize);
    global = sparse::inverse_permute(global, perm);
  }

  rep.global_stats = codec::summarize(global);
  history_.push(global);

  for (size_t i = 0; i < survivors.size(); ++i) {
    ClientRound& cr = rep.clients[survivors[i] - 1];
    cr.up_bytes = up_bytes[i];
    cr.down_bytes = down_per_client;
    uint32_t site = cfg_.client_site.empty()
                        ? survivors[i] % static_cast<uint32_t>(cfg_.bandwidth.sites.size())
                        : cfg_.client_site[survivors[i] - 1];
    cr.comm_s = simulate_comm(cr.up_bytes, cr.down_bytes, site, cfg_.server_site, cfg_.bandwidth);
    rep.up_bytes_total += cr.up_bytes;
    rep.down_bytes_total += cr.down_bytes;
    rep.comm_s = std::max(rep.comm_s, cr.comm_s);
  }

  double wall = rep.comm_s + rep.enc_s_total + rep.dec_s_total + rep.server_agg_s;
  rep.round_cost_usd =
      wall / 3600.0 * cfg_.pricing.instance_per_hour * cfg_.pricing.instances +
      static_cast<double>(rep.up_bytes_total + rep.down_bytes_total) / 1e9 * cfg_.pricing.egress_per_gb;

  prepare_next(rep.comm_s);
  return rep;
}

void Simulation::prepare_next(double idle_s) {
  ++round_;
  have_cache_ = false;
  cached_blocks_ = 0;
  pending_idle_s_ = idle_s;
  pending_precompute_s_ = 0.0;
  if (!cfg_.precompute || round_ > cfg_.rounds) return;

  unsigned lanes = key_.params().lanes_per_block();
  uint64_t coords = cfg_.coords();
  uint64_t bpc = (coords + lanes - 1) / lanes;
  uint64_t span = static_cast<uint64_t>(cfg_.clients) + 1;  // clients 1..N plus boundary N+1
  auto affordable = static_cast<uint64_t>(idle_s * cfg_.prf_blocks_per_sec);
  uint64_t bpc_afford = std::min({bpc, affordable / span, cfg_.cache_capacity_blocks / span});
  if (bpc_afford == 0) return;

  std::set<uint32_t> clients;
  for (uint32_t j = 1; j <= cfg_.clients; ++j) clients.insert(j);
  uint64_t coords_cached = std::min(coords, bpc_afford * lanes);
  auto t0 = std::chrono::steady_clock::now();
  cache_ = precompute(key_, round_, clients, coords_cached, cfg_.cache_capacity_blocks);
  pending_precompute_s_ = seconds_since(t0);
  have_cache_ = true;
  cached_blocks_ = cache_.block_count();
}

std::vector<RoundReport> Simulation::run_all() {
  std::vector<RoundReport> out;
  while (round_ <= cfg_.rounds) out.push_back(run_round());
  return out;
}

CostProjection project_cost(const std::vector<RoundReport>& reports, uint32_t rounds_to_convergence,
                            const PricingConfig& pricing) {
  CostProjection c;
  if (reports.empty() || rounds_to_convergence == 0) return c;
  double wall = 0.0, bytes = 0.0;
  for (const auto& r : reports) {
    wall += r.comm_s + r.enc_s_total + r.dec_s_total + r.server_agg_s;
    bytes += static_cast<double>(r.up_bytes_total + r.down_bytes_total);
  }
  double n = static_cast<double>(reports.size());
  double scale = static_cast<double>(rounds_to_convergence);
  uint32_t inst = pricing.instances ? pricing.instances : 1;
  c.compute_usd = wall / n * scale / 3600.0 * pricing.instance_per_hour * inst;
  c.egress_usd = bytes / n * scale / 1e9 * pricing.egress_per_gb;
  c.total_usd = c.compute_usd + c.egress_usd;
  return c;
}

}  // namespace flashe::sim
