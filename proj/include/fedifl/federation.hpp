#pragma once

#include <chrono>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "fedifl/data.hpp"
#include "fedifl/messages.hpp"
#include "fedifl/models.hpp"
#include "fedifl/serialize.hpp"
#include "fedifl/training.hpp"

namespace fedifl {

// ---------------------------------------------------------------------------
// Client phase machine: strictly forward, one step at a time.

enum class ClientPhase : int { idle = 0, ipcl, ipfg, uploaded, cct, model_uploaded, done };

inline const char* phase_name(ClientPhase p) {
  switch (p) {
    case ClientPhase::idle: return "idle";
    case ClientPhase::ipcl: return "ipcl";
    case ClientPhase::ipfg: return "ipfg";
    case ClientPhase::uploaded: return "uploaded";
    case ClientPhase::cct: return "cct";
    case ClientPhase::model_uploaded: return "model_uploaded";
    case ClientPhase::done: return "done";
  }
  return "?";
}

class PhaseMachine {
 public:
  ClientPhase phase() const { return phase_; }

  void advance(ClientPhase next) {
    if (static_cast<int>(next) != static_cast<int>(phase_) + 1)
      throw std::logic_error(std::string("illegal phase transition ") + phase_name(phase_) + " -> " +
                             phase_name(next));
    phase_ = next;
  }

 private:
  ClientPhase phase_ = ClientPhase::idle;
};

// ---------------------------------------------------------------------------
// Cloud: the two libraries gathered after intra-client training.

struct CloudState {
  std::map<int, std::vector<int>> label_space_library;
  std::map<int, Bytes> generator_library;
  GlobalModelDistribution aggregated;  // filled after the aggregation phase
};

inline CloudState cloud_gather(const std::vector<GeneratorUpload>& uploads, const std::vector<int>& expected) {
  CloudState cs;
  const std::set<int> want(expected.begin(), expected.end());
  for (const auto& u : uploads) {
    if (!want.count(u.client_id))
      throw std::invalid_argument("generator upload from unexpected client " + std::to_string(u.client_id));
    if (cs.generator_library.count(u.client_id))
      throw std::invalid_argument("duplicate generator upload from client " + std::to_string(u.client_id));
    cs.generator_library[u.client_id] = u.generator_params;
    cs.label_space_library[u.client_id] = u.label_space;
  }
  for (int id : expected)
    if (!cs.generator_library.count(id))
      throw std::invalid_argument("missing generator upload from client " + std::to_string(id));
  return cs;
}

// Everyone else's generator, never the requester's own.
inline LibraryDownload make_download(const CloudState& cs, int requester) {
  LibraryDownload d;
  for (const auto& [id, params] : cs.generator_library)
    if (id != requester) d.entries.push_back({id, params, cs.label_space_library.at(id)});
  return d;
}

// ---------------------------------------------------------------------------
// Parameter averaging over serialized tensors. Accumulation runs in double so
// the mean of identical uploads reproduces them bit for bit.

enum class AggregateMode { mean, sum };

inline AggregateMode aggregate_mode_from(const std::string& s) {
  if (s == "mean") return AggregateMode::mean;
  if (s == "sum") return AggregateMode::sum;
  throw std::invalid_argument("aggregate mode must be mean or sum, got " + s);
}

inline Bytes combine_params(const std::vector<Bytes>& uploads, AggregateMode mode) {
  if (uploads.empty()) throw std::invalid_argument("combine_params: nothing to combine");
  std::vector<std::vector<NamedTensor>> decoded;
  for (const auto& bytes : uploads) {
    ByteReader r(bytes);
    std::vector<NamedTensor> nts;
    while (!r.done()) nts.push_back(read_named_tensor(r));
    decoded.push_back(std::move(nts));
  }
  const auto& ref = decoded.front();
  for (const auto& d : decoded) {
    if (d.size() != ref.size()) throw std::invalid_argument("architecture mismatch: tensor counts differ");
    for (size_t i = 0; i < d.size(); ++i)
      if (d[i].name != ref[i].name || d[i].tensor.shape != ref[i].tensor.shape)
        throw std::invalid_argument("architecture mismatch at tensor " + ref[i].name);
  }

  Bytes out;
  for (size_t i = 0; i < ref.size(); ++i) {
    ArrayX<double> acc = ArrayX<double>::Zero(ref[i].tensor.size());
    for (const auto& d : decoded) acc += d[i].tensor.data.cast<double>();
    if (mode == AggregateMode::mean) acc /= static_cast<double>(decoded.size());
    Tensor<float> t(ref[i].tensor.shape, acc.cast<float>());
    write_named_tensor(out, ref[i].name, t);
  }
  return out;
}

struct AggregateResult {
  GlobalModelDistribution distribution;  // averaged P and DI, classifiers passed through
  Bytes specific_avg;                    // computed per the printed equation; not distributed
};

// Element-wise combination of the three extractors; global classifiers ride
// along untouched, one per source client.
inline AggregateResult aggregate(const std::vector<ModelUpload>& uploads, AggregateMode mode = AggregateMode::mean) {
  if (uploads.empty()) throw std::invalid_argument("aggregate: no model uploads");
  std::set<int> seen;
  std::vector<Bytes> primaries, invariants, specifics;
  for (const auto& u : uploads) {
    if (!seen.insert(u.client_id).second)
      throw std::invalid_argument("duplicate model upload from client " + std::to_string(u.client_id));
    primaries.push_back(u.primary_params);
    invariants.push_back(u.invariant_params);
    specifics.push_back(u.specific_params);
  }
  AggregateResult out;
  out.distribution.primary_params = combine_params(primaries, mode);
  out.distribution.invariant_params = combine_params(invariants, mode);
  out.specific_avg = combine_params(specifics, mode);
  std::map<int, Bytes> cls;
  for (const auto& u : uploads) cls[u.client_id] = u.global_classifier_params;
  for (auto& [id, bytes] : cls) out.distribution.global_classifiers.emplace_back(id, std::move(bytes));
  return out;
}

// Baseline averaging: every uploaded tensor set is averaged, classifier
// included; the classifier entry is labeled 0 (cloud).
inline GlobalModelDistribution fedavg_average(const std::vector<ModelUpload>& uploads) {
  if (uploads.empty()) throw std::invalid_argument("fedavg_average: no model uploads");
  std::vector<Bytes> primaries, deeps, classifiers;
  for (const auto& u : uploads) {
    primaries.push_back(u.primary_params);
    deeps.push_back(u.invariant_params);
    classifiers.push_back(u.global_classifier_params);
  }
  GlobalModelDistribution d;
  d.primary_params = combine_params(primaries, AggregateMode::mean);
  d.invariant_params = combine_params(deeps, AggregateMode::mean);
  d.global_classifiers.emplace_back(0, combine_params(classifiers, AggregateMode::mean));
  return d;
}

// ---------------------------------------------------------------------------
// Deployed global model and majority-vote inference.

template <class S>
struct GlobalModel {
  ArchitectureConfig arch;
  std::vector<int> global_space;
  Network<S> primary;
  Network<S> invariant;
  std::vector<std::pair<int, Network<S>>> classifiers;  // by source client id
};

template <class S>
GlobalModel<S> deploy(const GlobalModelDistribution& dist, const ArchitectureConfig& arch,
                      const std::vector<int>& global_space) {
  GlobalModel<S> gm;
  gm.arch = arch;
  gm.global_space = sorted_labels(global_space);
  Rng scratch(0);
  gm.primary = detail::build_primary<S>(arch, scratch);
  load_network(gm.primary, dist.primary_params);
  gm.invariant = detail::build_deep<S>(arch, scratch, "deep_invariant");
  load_network(gm.invariant, dist.invariant_params);
  for (const auto& [id, bytes] : dist.global_classifiers) {
    Network<S> c =
        detail::build_classifier<S>(arch, scratch, "global_classifier", static_cast<int>(gm.global_space.size()));
    load_network(c, bytes);
    c.frozen = true;
    gm.classifiers.emplace_back(id, std::move(c));
  }
  gm.primary.frozen = true;
  gm.invariant.frozen = true;
  return gm;
}

struct VoteOutcome {
  int label = -1;
  std::map<int, int> tally;  // label id -> classifier votes for this sample
};

// Votes for a whole batch: argmax per classifier, modal class per sample,
// ties broken by the highest summed softmax probability, then lowest label.
template <class S>
std::vector<VoteOutcome> infer_majority_vote_batch(GlobalModel<S>& gm, const Tensor<S>& x) {
  if (gm.classifiers.empty()) throw std::invalid_argument("infer_majority_vote: no classifiers deployed");
  const Tensor<S> feats = gm.invariant.forward(gm.primary.forward(x, Mode::eval), Mode::eval);
  const int B = x.dim(0);
  const int C = static_cast<int>(gm.global_space.size());
  Eigen::MatrixXi votes = Eigen::MatrixXi::Zero(B, C);
  Eigen::MatrixXd prob_sum = Eigen::MatrixXd::Zero(B, C);

  for (auto& [id, cls] : gm.classifiers) {
    const Tensor<S> logits = cls.forward(feats, Mode::eval);
    for (int r = 0; r < B; ++r) {
      const auto row = logits.data.segment(static_cast<Eigen::Index>(r) * C, C).template cast<double>();
      const ArrayX<double> p = (row - row.maxCoeff()).exp();
      prob_sum.row(r) += (p / p.sum()).matrix().transpose();
      Eigen::Index best = 0;
      row.maxCoeff(&best);
      votes(r, best) += 1;
    }
  }

  std::vector<VoteOutcome> out(static_cast<size_t>(B));
  for (int r = 0; r < B; ++r) {
    int best = 0;
    for (int c = 1; c < C; ++c) {
      const bool more_votes = votes(r, c) > votes(r, best);
      const bool tied_better_prob = votes(r, c) == votes(r, best) && prob_sum(r, c) > prob_sum(r, best);
      if (more_votes || tied_better_prob) best = c;
    }
    VoteOutcome& vo = out[static_cast<size_t>(r)];
    vo.label = gm.global_space[static_cast<size_t>(best)];
    for (int c = 0; c < C; ++c)
      if (votes(r, c) > 0) vo.tally[gm.global_space[static_cast<size_t>(c)]] = votes(r, c);
  }
  return out;
}

template <class S>
VoteOutcome infer_majority_vote(GlobalModel<S>& gm, const Tensor<S>& sample) {
  Tensor<S> x = sample;
  if (x.rank() == 2) x = x.reshaped({1, x.dim(0), x.dim(1)});
  if (x.rank() != 3 || x.dim(0) != 1)
    throw ShapeError("infer_majority_vote: expected one (channels,length) sample, got " + shape_str(sample.shape));
  return infer_majority_vote_batch(gm, x)[0];
}

struct TargetEvaluation {
  double accuracy = 0;
  int samples = 0;
  std::map<int, int> vote_tallies;  // label id -> classifier votes over the whole evaluation
};

template <class S>
TargetEvaluation evaluate_target(GlobalModel<S>& gm, const ClientDataset& target) {
  TargetEvaluation ev;
  int correct = 0;
  const size_t chunk = 256;
  for (size_t at = 0; at < target.heldout_size(); at += chunk) {
    const size_t n = std::min(chunk, target.heldout_size() - at);
    std::vector<SignalSample> part;
    part.reserve(n);
    for (size_t i = 0; i < n; ++i) part.push_back(target.heldout(at + i));
    const auto outcomes = infer_majority_vote_batch(gm, stack_signals<S>(part));
    for (size_t i = 0; i < n; ++i) {
      correct += outcomes[i].label == part[i].label;
      for (const auto& [label, count] : outcomes[i].tally) ev.vote_tallies[label] += count;
    }
    ev.samples += static_cast<int>(n);
  }
  ev.accuracy = ev.samples ? static_cast<double>(correct) / ev.samples : 0.0;
  return ev;
}

// ---------------------------------------------------------------------------
// Experiment configuration and reports.

struct ExperimentConfig {
  ArchitectureConfig arch;  // defaults to the full-scale preset
  TrainHyper hyper;
  int n_train = 200;  // per device and label
  int n_heldout = 50;
  bool shift = true;
  AggregateMode agg_mode = AggregateMode::mean;
  AblationSwitches ablation;

  static ExperimentConfig paper() { return {}; }

  static ExperimentConfig desk() {
    ExperimentConfig c;
    c.arch = ArchitectureConfig::desk();
    c.hyper.ipcl_epochs = 20;
    c.hyper.ipfg_epochs = 30;
    c.hyper.cct_epochs = 50;
    c.hyper.batch_size = 32;
    c.n_train = 100;
    c.n_heldout = 50;
    return c;
  }
};

struct TaskReport {
  int task = 0;
  std::string method;
  uint64_t seed = 0;
  int target_client = 0;
  std::vector<int> source_clients;
  std::vector<TraceRow> per_phase_losses;
  std::map<int, double> per_client_train_acc;
  double target_acc = 0;
  std::map<int, int> vote_tallies;
  std::map<std::string, uint64_t> phase_bytes;
  double wall_time_s = 0;  // timing only; excluded from determinism comparisons
};

inline int task_target(int task_id) {
  if (task_id < 1 || task_id > 4) throw std::invalid_argument("task id must be 1..4, got " + std::to_string(task_id));
  return task_id;  // task k holds out client k
}

inline std::vector<int> task_sources(int task_id) {
  const int target = task_target(task_id);
  std::vector<int> out;
  for (int k = 1; k <= 4; ++k)
    if (k != target) out.push_back(k);
  return out;
}

inline std::string method_name(const AblationSwitches& ab) {
  std::string name = "fedifl";
  if (!ab.ssim) name += "_wo_ssim";
  if (!ab.fic) name += "_wo_fic";
  if (!ab.fip) name += "_wo_fip";
  if (!ab.ortho) name += "_wo_o";
  return name;
}

inline AblationSwitches parse_ablation(const std::set<std::string>& disable) {
  AblationSwitches ab;
  for (const auto& name : disable) {
    if (name == "ssim")
      ab.ssim = false;
    else if (name == "fic")
      ab.fic = false;
    else if (name == "fip")
      ab.fip = false;
    else if (name == "o")
      ab.ortho = false;
    else
      throw std::invalid_argument("unknown ablation name \"" + name + "\" (expected ssim, fic, fip, or o)");
  }
  return ab;
}

// Called between protocol stages; tests use it to watch access counters.
using PhaseObserver = std::function<void(const std::string& stage, const Fleet& fleet)>;

namespace detail {

inline Fleet task_fleet(const FleetLayout& layout, const ExperimentConfig& cfg, uint64_t seed) {
  const DomainShiftSpec spec = cfg.shift ? DomainShiftSpec::defaults(layout) : DomainShiftSpec::none();
  return synth_fleet(layout, spec, cfg.n_train, cfg.arch.input_length, hash_seed({seed, 0xDA7AULL}), cfg.n_heldout);
}

inline void warn_source_structure(const FleetLayout& layout, const std::vector<int>& sources) {
  FleetLayout sub;
  for (const auto& c : layout.clients)
    if (std::find(sources.begin(), sources.end(), c.client_id) != sources.end()) sub.clients.push_back(c);
  for (const auto& w : layout_warnings(sub)) std::cerr << "source structure warning: " << w << "\n";
}

template <class S>
std::vector<LibraryGenerator<S>> reconstruct_library(const LibraryDownload& dl, const ArchitectureConfig& arch) {
  std::vector<LibraryGenerator<S>> lib;
  for (const auto& e : dl.entries) {
    LibraryGenerator<S> lg;
    lg.client_id = e.client_id;
    lg.label_space = e.label_space;
    Rng scratch(0);
    lg.net = build_generator<S>(arch, scratch, static_cast<int>(e.label_space.size()));
    load_network(lg.net, e.generator_params);
    lg.net.frozen = true;
    lib.push_back(std::move(lg));
  }
  return lib;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Full protocol run: intra-client training, gathering, cross-client training,
// aggregation, majority-vote evaluation on the held-out target client.

inline TaskReport run_task(int task_id, const ExperimentConfig& cfg, uint64_t seed, const PhaseObserver& observe = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.arch.validate();

  TaskReport rep;
  rep.task = task_id;
  rep.method = method_name(cfg.ablation);
  rep.seed = seed;
  rep.target_client = task_target(task_id);
  rep.source_clients = task_sources(task_id);

  const FleetLayout layout = default_layout();
  detail::warn_source_structure(layout, rep.source_clients);
  Fleet fleet = detail::task_fleet(layout, cfg, seed);
  const std::vector<int> global_space = layout.global_space();

  Bus bus;
  std::map<int, ClientModelBundle<float>> bundles;
  std::map<int, PhaseMachine> phases;
  // Common initialization across clients: parameter averaging is only
  // meaningful when the averaged networks start from the same point.
  const uint64_t init_seed = hash_seed({seed, 0x1417ULL});
  for (int k : rep.source_clients)
    bundles.emplace(k, build_bundle<float>(cfg.arch, layout.client(k).label_space(), global_space, init_seed));
  if (observe) observe("init", fleet);

  // Intra-client training, then generator upload.
  for (int k : rep.source_clients) {
    const auto u64k = static_cast<uint64_t>(k);
    phases[k].advance(ClientPhase::ipcl);
    run_ipcl(bundles.at(k), fleet.at(k), cfg.hyper, cfg.ablation, hash_seed({seed, u64k, 1}), rep.per_phase_losses);
    phases[k].advance(ClientPhase::ipfg);
    run_ipfg(bundles.at(k), fleet.at(k), cfg.hyper, hash_seed({seed, u64k, 2}), rep.per_phase_losses);
    phases[k].advance(ClientPhase::uploaded);
    GeneratorUpload up;
    up.client_id = k;
    up.generator_params = serialize_network(bundles.at(k).generator);
    up.label_space = bundles.at(k).label_space;
    bus.post("generator_upload", up);
  }
  if (observe) observe("intra", fleet);

  // Cloud gathers the libraries and prepares per-client downloads.
  std::vector<GeneratorUpload> uploads;
  for (auto& msg : bus.drain("generator_upload")) uploads.push_back(std::get<GeneratorUpload>(msg));
  CloudState cloud = cloud_gather(uploads, rep.source_clients);
  for (int k : rep.source_clients) bus.post("library_download", make_download(cloud, k));
  std::vector<LibraryDownload> downloads;
  for (auto& msg : bus.drain("library_download")) downloads.push_back(std::get<LibraryDownload>(msg));

  // Cross-client training against reconstructed generators, then model upload.
  for (size_t i = 0; i < rep.source_clients.size(); ++i) {
    const int k = rep.source_clients[i];
    auto library = detail::reconstruct_library<float>(downloads[i], cfg.arch);
    init_disentanglers(bundles.at(k));
    phases[k].advance(ClientPhase::cct);
    // One shared seed for every client's cross-client phase: the generated
    // rows each step are then identical fleet-wide (the library and label
    // spaces already are), which anchors the per-client trajectories to a
    // common path and keeps the uploaded models averageable.
    run_cct(bundles.at(k), fleet.at(k), library, cfg.hyper, cfg.ablation,
            hash_seed({seed, 3}), rep.per_phase_losses);
    phases[k].advance(ClientPhase::model_uploaded);
    ModelUpload up;
    up.client_id = k;
    up.primary_params = serialize_network(bundles.at(k).primary);
    up.invariant_params = serialize_network(bundles.at(k).deep_invariant);
    up.specific_params = serialize_network(bundles.at(k).deep_specific);
    up.global_classifier_params = serialize_network(bundles.at(k).global_classifier);
    bus.post("model_upload", up);
  }
  if (observe) observe("cct", fleet);

  // Aggregation and distribution.
  std::vector<ModelUpload> model_uploads;
  for (auto& msg : bus.drain("model_upload")) model_uploads.push_back(std::get<ModelUpload>(msg));
  AggregateResult agg = aggregate(model_uploads, cfg.agg_mode);
  cloud.aggregated = agg.distribution;
  bus.post("global_distribution", cloud.aggregated);
  const auto distributed = std::get<GlobalModelDistribution>(bus.drain("global_distribution").at(0));
  for (int k : rep.source_clients) phases[k].advance(ClientPhase::done);

  for (int k : rep.source_clients)
    rep.per_client_train_acc[k] = global_train_accuracy(bundles.at(k), fleet.at(k));
  if (observe) observe("aggregate", fleet);

  if (fleet.at(rep.target_client).accesses() != 0)
    throw std::logic_error("target client data was read before inference");
  GlobalModel<float> gm = deploy<float>(distributed, cfg.arch, global_space);
  const TargetEvaluation ev = evaluate_target(gm, fleet.at(rep.target_client));
  rep.target_acc = ev.accuracy;
  rep.vote_tallies = ev.vote_tallies;
  rep.phase_bytes = bus.byte_counts();
  rep.wall_time_s = detail::seconds_since(t0);
  return rep;
}

inline TaskReport run_ablation(int task_id, const std::set<std::string>& disable, ExperimentConfig cfg, uint64_t seed,
                               const PhaseObserver& observe = {}) {
  cfg.ablation = parse_ablation(disable);
  return run_task(task_id, cfg, seed, observe);
}

// ---------------------------------------------------------------------------
// FedAvg baseline: rounds of plain local training and whole-model averaging,
// evaluated through the identical report schema.

inline TaskReport run_fedavg_baseline(int task_id, const ExperimentConfig& cfg, uint64_t seed,
                                      const PhaseObserver& observe = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  cfg.arch.validate();

  TaskReport rep;
  rep.task = task_id;
  rep.method = "fedavg";
  rep.seed = seed;
  rep.target_client = task_target(task_id);
  rep.source_clients = task_sources(task_id);

  const FleetLayout layout = default_layout();
  detail::warn_source_structure(layout, rep.source_clients);
  Fleet fleet = detail::task_fleet(layout, cfg, seed);
  const std::vector<int> global_space = layout.global_space();

  Bus bus;
  std::map<int, ClientModelBundle<float>> bundles;
  const uint64_t init_seed = hash_seed({seed, 0x1417ULL});
  for (int k : rep.source_clients)
    bundles.emplace(k, build_bundle<float>(cfg.arch, layout.client(k).label_space(), global_space, init_seed));
  if (observe) observe("init", fleet);

  const int rounds = std::max(1, cfg.hyper.fedavg_rounds);
  const int local_epochs = std::max(1, cfg.hyper.ipcl_epochs / rounds);
  GlobalModelDistribution dist;
  for (int round = 0; round < rounds; ++round) {
    for (int k : rep.source_clients) {
      fedavg_local_train(bundles.at(k), fleet.at(k), local_epochs, cfg.hyper,
                         hash_seed({seed, static_cast<uint64_t>(k), 4}), round, rep.per_phase_losses);
      ModelUpload up;
      up.client_id = k;
      up.primary_params = serialize_network(bundles.at(k).primary);
      up.invariant_params = serialize_network(bundles.at(k).deep);
      up.global_classifier_params = serialize_network(bundles.at(k).global_classifier);
      bus.post("model_upload", up);
    }
    std::vector<ModelUpload> ups;
    for (auto& msg : bus.drain("model_upload")) ups.push_back(std::get<ModelUpload>(msg));
    bus.post("global_distribution", fedavg_average(ups));
    dist = std::get<GlobalModelDistribution>(bus.drain("global_distribution").at(0));
    for (int k : rep.source_clients) {
      load_network(bundles.at(k).primary, dist.primary_params);
      load_network(bundles.at(k).deep, dist.invariant_params);
      load_network(bundles.at(k).global_classifier, dist.global_classifiers.at(0).second);
    }
  }
  if (observe) observe("rounds", fleet);

  for (int k : rep.source_clients) {
    auto& b = bundles.at(k);
    int correct = 0, total = 0;
    const size_t chunk = 256;
    const ClientDataset& ds = fleet.at(k);
    for (size_t at = 0; at < ds.train_size(); at += chunk) {
      const size_t n = std::min(chunk, ds.train_size() - at);
      std::vector<SignalSample> part;
      for (size_t i = 0; i < n; ++i) part.push_back(ds.train(at + i));
      const Tensor<float> df = b.deep.forward(b.primary.forward(stack_signals<float>(part), Mode::eval), Mode::eval);
      const Tensor<float> logits = b.global_classifier.forward(df, Mode::eval);
      for (size_t i = 0; i < n; ++i) {
        Eigen::Index best = 0;
        logits.data.segment(static_cast<Eigen::Index>(i) * logits.dim(1), logits.dim(1)).maxCoeff(&best);
        correct += b.global_space[static_cast<size_t>(best)] == part[i].label;
        ++total;
      }
    }
    rep.per_client_train_acc[k] = total ? static_cast<double>(correct) / total : 0.0;
  }

  if (fleet.at(rep.target_client).accesses() != 0)
    throw std::logic_error("target client data was read before inference");
  GlobalModel<float> gm = deploy<float>(dist, cfg.arch, global_space);
  const TargetEvaluation ev = evaluate_target(gm, fleet.at(rep.target_client));
  rep.target_acc = ev.accuracy;
  rep.vote_tallies = ev.vote_tallies;
  rep.phase_bytes = bus.byte_counts();
  rep.wall_time_s = detail::seconds_since(t0);
  return rep;
}

}  // namespace fedifl
