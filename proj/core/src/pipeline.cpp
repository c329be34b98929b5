#include "caplab/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>

#include "caplab/hash.hpp"
#include "caplab/negatives.hpp"
#include "caplab/rng.hpp"
#include "caplab/util.hpp"

namespace caplab {

namespace {

constexpr const char* kScenes = "data/scenes.jsonl";
constexpr const char* kScenesShifted = "data/scenes_shifted.jsonl";
constexpr const char* kVocab = "data/vocab.txt";
constexpr const char* kSplits = "data/splits.json";
constexpr const char* kSelfNegatives = "negatives/self_negatives.jsonl";
constexpr const char* kCorruptions = "negatives/corruptions.jsonl";

std::string scst_tag(RewardKind kind) {
  switch (kind) {
    case RewardKind::cider: return "scst_cider";
    case RewardKind::raw_score: return "scst_raw";
    case RewardKind::discriminator: return "scst_disc";
  }
  throw Error("unknown reward kind");
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// Wraps one stage execution: skip when inputs are unchanged and outputs
// intact, otherwise run and record input/output hashes.
struct Pipeline::StageGuard {
  Pipeline& p;
  StageRecord rec;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  bool skip = false;

  StageGuard(Pipeline& pipeline, std::string stage, std::string params,
             const std::vector<std::string>& input_rels)
      : p(pipeline) {
    rec.stage = std::move(stage);
    rec.params = std::move(params);
    rec.config_hash = p.cfg_.config_hash();
    for (const auto& rel : input_rels) rec.inputs[rel] = p.require_artifact(rel);
    const StageRecord* prev = p.manifest_.find(rec.stage, rec.params);
    if (prev && prev->inputs == rec.inputs && prev->config_hash == rec.config_hash &&
        p.manifest_.outputs_intact(*prev)) {
      std::cout << "[" << rec.stage << (rec.params.empty() ? "" : ":" + rec.params)
                << "] up to date, skipping\n";
      skip = true;
    }
  }

  void finish(const std::vector<std::string>& output_rels) {
    for (const auto& rel : output_rels) {
      const auto path = p.run_dir_ / rel;
      if (!std::filesystem::exists(path)) {
        throw Error(rec.stage + ": expected output missing: " + rel);
      }
      rec.outputs[rel] = sha256_file(path);
    }
    rec.completed_utc = utc_timestamp();
    rec.duration_s = seconds_since(t0);
    p.manifest_.record(rec);
    std::cout << "[" << rec.stage << (rec.params.empty() ? "" : ":" + rec.params) << "] done in "
              << rec.duration_s << "s\n";
  }
};

Pipeline::Pipeline(RunConfig config)
    : cfg_(std::move(config)), run_dir_(cfg_.out_dir), manifest_(RunManifest::open(run_dir_)) {
  std::filesystem::create_directories(run_dir_ / "manifest");
  const auto frozen = run_dir_ / "manifest" / "config.json";
  const std::string resolved = cfg_.to_json().dump(2) + "\n";
  if (std::filesystem::exists(frozen)) {
    if (read_file(frozen) != resolved) {
      throw Error("run directory " + run_dir_.string() +
                  " was created with a different config; use a fresh out_dir");
    }
  } else {
    write_file(frozen, resolved);
    write_file(run_dir_ / "manifest" / "config.hash", cfg_.config_hash() + "\n");
  }
}

const std::vector<std::string>& Pipeline::stage_names() {
  static const std::vector<std::string> names = {
      "gen-data",       "train-xe",         "pretrain-encoder", "train-reward-captioner",
      "mine-negatives", "finetune-discriminator", "train-scst",  "evaluate"};
  return names;
}

const std::vector<std::string>& Pipeline::canonical_tags() {
  static const std::vector<std::string> tags = {"xe",         "reward_captioner_a",
                                                "reward_captioner_b", "scst_cider",
                                                "scst_raw",   "scst_disc"};
  return tags;
}

std::string Pipeline::producing_stage(const std::string& rel) {
  if (rel.rfind("data/", 0) == 0) return "gen-data";
  if (rel == checkpoint_rel("xe")) return "train-xe";
  if (rel == checkpoint_rel("encoder_base") || rel == checkpoint_rel("encoder_clean")) {
    return "pretrain-encoder";
  }
  if (rel == checkpoint_rel("reward_captioner_a") || rel == checkpoint_rel("reward_captioner_b")) {
    return "train-reward-captioner";
  }
  if (rel.rfind("negatives/", 0) == 0) return "mine-negatives";
  if (rel == checkpoint_rel("discriminator")) return "finetune-discriminator";
  if (rel.rfind("checkpoints/scst_", 0) == 0) return "train-scst";
  if (rel.rfind("reports/", 0) == 0) return "evaluate";
  return "<unknown>";
}

std::string Pipeline::require_artifact(const std::string& rel) {
  const auto path = run_dir_ / rel;
  if (!std::filesystem::exists(path)) {
    throw Error("missing artifact '" + rel + "'; run stage '" + producing_stage(rel) + "' first");
  }
  const std::string actual = sha256_file(path);
  const auto recorded = manifest_.recorded_output_hash(rel);
  if (!recorded) {
    throw Error("artifact '" + rel + "' is not recorded in the manifest; re-run stage '" +
                producing_stage(rel) + "'");
  }
  if (*recorded != actual) {
    throw Error("artifact '" + rel + "' does not match the hash recorded by stage '" +
                producing_stage(rel) + "' (stale or modified file)");
  }
  return actual;
}

Dataset& Pipeline::dataset() {
  if (!dataset_) {
    require_artifact(kScenes);
    require_artifact(kScenesShifted);
    require_artifact(kVocab);
    require_artifact(kSplits);
    dataset_ = std::make_unique<Dataset>(load_dataset(run_dir_ / "data", cfg_.world));
  }
  return *dataset_;
}

CiderD& Pipeline::train_cider() {
  if (!cider_) {
    Dataset& ds = dataset();
    std::vector<std::vector<std::vector<std::string>>> ref_sets;
    for (int id : ds.split.train) {
      std::vector<std::vector<std::string>> refs;
      for (const auto& t : ds.scene_by_id(id).reference_texts) refs.push_back(split_ws(t));
      ref_sets.push_back(std::move(refs));
    }
    cider_ = std::make_unique<CiderD>();
    cider_->build_df(ref_sets);
  }
  return *cider_;
}

std::vector<int> Pipeline::split_ids(const std::string& split) {
  const Dataset& ds = dataset();
  if (split == "train") return ds.split.train;
  if (split == "val") return ds.split.val;
  if (split == "test") return ds.split.test;
  if (split == "shifted") return ds.split.shifted;
  throw Error("unknown split: " + split);
}

std::string Pipeline::corpus_id(const std::string& split) {
  return sha256_hex(manifest_.recorded_output_hash(kScenes).value_or("") +
                    manifest_.recorded_output_hash(kScenesShifted).value_or("") +
                    manifest_.recorded_output_hash(kSplits).value_or("") +
                    manifest_.recorded_output_hash(kVocab).value_or("") + ":" + split);
}

std::unique_ptr<Captioner> Pipeline::make_captioner() const {
  CaptionerConfig mc = cfg_.model;
  mc.vocab_size = dataset_->vocab.size();
  mc.init_seed = splitmix64(cfg_.seed ^ fnv1a64("captioner-init"));
  return std::make_unique<Captioner>(mc);
}

std::unique_ptr<Captioner> Pipeline::load_captioner(const std::string& rel,
                                                    const std::vector<std::string>& allowed) {
  require_artifact(rel);
  auto model = make_captioner();
  const auto header =
      nn::load_checkpoint(run_dir_ / rel, model->params(), model->config().identity_hash());
  if (std::find(allowed.begin(), allowed.end(), header.stage) == allowed.end()) {
    throw Error(rel + ": unexpected stage tag '" + header.stage + "'");
  }
  return model;
}

std::unique_ptr<DualEncoder> Pipeline::load_encoder(const std::string& rel,
                                                    const std::vector<std::string>& allowed) {
  require_artifact(rel);
  DualEncoderConfig ec = cfg_.encoder;
  ec.vocab_size = dataset().vocab.size();
  ec.init_seed = splitmix64(cfg_.seed ^ fnv1a64("encoder-init"));
  auto encoder = std::make_unique<DualEncoder>(ec);
  const auto header = nn::load_checkpoint(run_dir_ / rel, encoder->params(), ec.identity_hash());
  if (std::find(allowed.begin(), allowed.end(), header.stage) == allowed.end()) {
    throw Error(rel + ": unexpected stage tag '" + header.stage + "'");
  }
  return encoder;
}

void Pipeline::run_stage(const std::string& stage, const std::string& reward_override) {
  if (stage == "gen-data") return gen_data();
  if (stage == "train-xe") return train_xe_stage();
  if (stage == "pretrain-encoder") return pretrain_encoder_stage();
  if (stage == "train-reward-captioner") return train_reward_captioner_stage();
  if (stage == "mine-negatives") return mine_negatives_stage();
  if (stage == "finetune-discriminator") return finetune_discriminator_stage();
  if (stage == "train-scst") {
    const RewardKind kind =
        reward_override.empty() ? cfg_.reward_kind : reward_kind_from_name(reward_override);
    return train_scst_stage(kind);
  }
  if (stage == "evaluate") return evaluate_stage("val");
  throw Error("unknown stage '" + stage + "'; valid stages: gen-data, train-xe, "
              "pretrain-encoder, train-reward-captioner, mine-negatives, "
              "finetune-discriminator, train-scst, evaluate");
}

void Pipeline::gen_data() {
  StageGuard guard(*this, "gen-data", "", {});
  if (guard.skip) return;
  Dataset ds = build_dataset(cfg_.world, cfg_.n_scenes, cfg_.ratios, cfg_.n_shifted, cfg_.seed);
  save_dataset(run_dir_ / "data", ds);
  dataset_ = std::make_unique<Dataset>(std::move(ds));
  guard.finish({kScenes, kScenesShifted, kVocab, kSplits});
}

void Pipeline::train_xe_stage() {
  StageGuard guard(*this, "train-xe", "", {kScenes, kScenesShifted, kVocab, kSplits});
  if (guard.skip) return;
  Dataset& ds = dataset();
  auto model = make_captioner();

  XeTrainConfig tc = cfg_.xe;
  tc.seed = cfg_.seed;
  tc.threads = cfg_.effective_threads();
  tc.metrics_log = run_dir_ / "logs" / "xe_metrics.jsonl";
  std::filesystem::remove(tc.metrics_log);
  const XeTrainResult result = train_xe(*model, ds, tc);
  std::cout << "[train-xe] val xe loss " << result.initial_val_loss << " -> "
            << result.final_val_loss << "\n";

  nn::save_checkpoint(run_dir_ / checkpoint_rel("xe"), model->params(), "xe",
                      model->config().identity_hash());
  guard.finish({checkpoint_rel("xe"), "logs/xe_metrics.jsonl"});
}

namespace {

// Contrastive pretraining of the dual encoder on (scene, reference)
// pairs; returns the mean loss of the last logged window.
void pretrain_encoder_steps(DualEncoder& encoder, const Dataset& ds, long first_step,
                            long last_step, int batch, double lr, long eval_interval,
                            std::uint64_t seed, const std::filesystem::path& log,
                            nn::Adam& optimizer) {
  for (long step = first_step; step < last_step; ++step) {
    Rng rng = substream(seed, "encpre-batch", static_cast<std::uint64_t>(step));
    std::vector<int> ids = ds.split.train;
    rng.shuffle(ids);
    ids.resize(static_cast<std::size_t>(std::min<long>(batch, static_cast<long>(ids.size()))));

    nn::Graph g;
    std::vector<int> text_rows, image_rows;
    for (int id : ids) {
      const SceneInstance& scene = ds.scene_by_id(id);
      const int ref = static_cast<int>(rng.below(kReferencesPerScene));
      text_rows.push_back(
          encoder.embed_text_graph(g, scene.references[static_cast<std::size_t>(ref)].content_ids()));
      image_rows.push_back(encoder.embed_image_graph(g, scene.features));
    }
    const int S = g.matmul(g.vstack(text_rows), g.transpose(g.vstack(image_rows)));
    const int loss = clip_contrastive_loss_graph(g, S, g.param(encoder.logit_scale_param()));
    const double loss_value = g.scalar(loss);
    if (!std::isfinite(loss_value)) {
      throw Error("pretrain-encoder: loss diverged at step " + std::to_string(step));
    }
    g.backward(loss);
    optimizer.step(lr, g.param_grads());
    encoder.clamp_logit_scale();

    if ((step + 1) % eval_interval == 0 || step + 1 == last_step) {
      std::ofstream out(log, std::ios::app);
      out << nlohmann::ordered_json{{"step", step + 1}, {"loss", loss_value}}.dump() << "\n";
    }
  }
}

}  // namespace

void Pipeline::pretrain_encoder_stage() {
  StageGuard guard(*this, "pretrain-encoder", "", {kScenes, kScenesShifted, kVocab, kSplits});
  if (guard.skip) return;
  Dataset& ds = dataset();

  DualEncoderConfig ec = cfg_.encoder;
  ec.vocab_size = ds.vocab.size();
  ec.init_seed = splitmix64(cfg_.seed ^ fnv1a64("encoder-init"));
  DualEncoder encoder(ec);

  const auto log = run_dir_ / "logs" / "encoder_pretrain.jsonl";
  std::filesystem::create_directories(log.parent_path());
  std::filesystem::remove(log);

  const auto& pc = cfg_.encoder_pretrain;
  nn::Adam optimizer(encoder.params().trainable());
  pretrain_encoder_steps(encoder, ds, 0, pc.steps, pc.batch, pc.lr, pc.eval_interval, cfg_.seed,
                         log, optimizer);
  nn::save_checkpoint(run_dir_ / checkpoint_rel("encoder_base"), encoder.params(), "base",
                      ec.identity_hash());

  // The "clean" scorer: the same encoder trained longer on reference
  // pairs only, emulating a second, better-aligned reward style.
  pretrain_encoder_steps(encoder, ds, pc.steps, pc.steps + pc.clean_extra_steps, pc.batch, pc.lr,
                         pc.eval_interval, cfg_.seed, log, optimizer);
  nn::save_checkpoint(run_dir_ / checkpoint_rel("encoder_clean"), encoder.params(), "base",
                      ec.identity_hash());

  guard.finish({checkpoint_rel("encoder_base"), checkpoint_rel("encoder_clean"),
                "logs/encoder_pretrain.jsonl"});
}

void Pipeline::train_reward_captioner_stage() {
  StageGuard guard(*this, "train-reward-captioner", "",
                   {kScenes, kScenesShifted, kVocab, kSplits, checkpoint_rel("xe"),
                    checkpoint_rel("encoder_base"), checkpoint_rel("encoder_clean")});
  if (guard.skip) return;
  Dataset& ds = dataset();

  const auto train_one = [&](const std::string& name, const std::string& encoder_rel) {
    auto model = load_captioner(checkpoint_rel("xe"), {"xe"});
    auto encoder = load_encoder(encoder_rel, {"base"});
    const RewardFunction reward =
        RewardFunction::make_encoder(RewardKind::raw_score, encoder.get(), cfg_.reward_w);

    ScstConfig sc = cfg_.scst;
    sc.seed = splitmix64(cfg_.seed ^ fnv1a64(name));
    sc.threads = cfg_.effective_threads();
    sc.metrics_log = run_dir_ / "logs" / (name + ".jsonl");
    sc.eval_cider = &train_cider();
    std::filesystem::remove(sc.metrics_log);

    const ScstResult result = train_scst(*model, ds, reward, sc);
    std::cout << "[train-reward-captioner] " << name << " val reward "
              << result.initial_val_reward << " -> " << result.final_val_reward << "\n";
    nn::save_checkpoint(run_dir_ / checkpoint_rel(name), model->params(), "reward-captioner",
                        model->config().identity_hash());
  };

  train_one("reward_captioner_a", checkpoint_rel("encoder_base"));
  train_one("reward_captioner_b", checkpoint_rel("encoder_clean"));
  guard.finish({checkpoint_rel("reward_captioner_a"), checkpoint_rel("reward_captioner_b"),
                "logs/reward_captioner_a.jsonl", "logs/reward_captioner_b.jsonl"});
}

void Pipeline::mine_negatives_stage() {
  StageGuard guard(*this, "mine-negatives", "",
                   {kScenes, kScenesShifted, kVocab, kSplits,
                    checkpoint_rel("reward_captioner_a"), checkpoint_rel("reward_captioner_b")});
  if (guard.skip) return;
  Dataset& ds = dataset();

  auto cap_a = load_captioner(checkpoint_rel("reward_captioner_a"), {"reward-captioner"});
  auto cap_b = load_captioner(checkpoint_rel("reward_captioner_b"), {"reward-captioner"});

  // Negatives cover train and val: the discriminator trains on train
  // scenes and is scored on held-out val scenes.
  std::vector<int> ids = ds.split.train;
  ids.insert(ids.end(), ds.split.val.begin(), ds.split.val.end());
  std::sort(ids.begin(), ids.end());

  const auto negatives = mine_self_negatives(
      ds, ids, *cap_a, *cap_b, sha256_file(run_dir_ / checkpoint_rel("reward_captioner_a")),
      sha256_file(run_dir_ / checkpoint_rel("reward_captioner_b")), cfg_.effective_threads());
  save_negatives(run_dir_ / kSelfNegatives, negatives);

  // Manually corrupted references for the negatives-source ablation.
  static const CorruptionMode kModes[] = {CorruptionMode::truncate, CorruptionMode::repeat_final,
                                          CorruptionMode::duplicate_concept, CorruptionMode::swap,
                                          CorruptionMode::substitute, CorruptionMode::drop};
  std::vector<CorruptionRecord> corruptions;
  for (int id : ids) {
    const SceneInstance& scene = ds.scene_by_id(id);
    for (int k = 0; k < 2; ++k) {
      const CorruptionMode mode = kModes[(static_cast<std::size_t>(id) * 2 + static_cast<std::size_t>(k)) % 6];
      const CorruptionSpec spec{mode, splitmix64(scene.seed ^ static_cast<std::uint64_t>(k))};
      const TokenSequence corrupted = corrupt(scene.references.front(), spec, ds.vocab);
      corruptions.push_back({id, mode, corrupted.text});
    }
  }
  save_corruptions(run_dir_ / kCorruptions, corruptions);

  guard.finish({kSelfNegatives, kCorruptions});
}

void Pipeline::finetune_discriminator_stage() {
  StageGuard guard(*this, "finetune-discriminator", "",
                   {kScenes, kScenesShifted, kVocab, kSplits, checkpoint_rel("encoder_base"),
                    kSelfNegatives, kCorruptions});
  if (guard.skip) return;
  Dataset& ds = dataset();

  auto encoder = load_encoder(checkpoint_rel("encoder_base"), {"base"});

  std::map<int, NegativeSet> negatives;
  if (cfg_.negatives_source == "self") {
    negatives = negatives_by_scene(load_negatives(run_dir_ / kSelfNegatives, ds.vocab));
  } else {
    std::map<int, std::vector<std::string>> texts;
    for (const auto& rec : load_corruptions(run_dir_ / kCorruptions)) {
      texts[rec.scene_id].push_back(rec.text);
    }
    for (const auto& [id, t] : texts) {
      if (t.size() < 2) throw Error("manual negatives: need two corruptions per scene");
      NegativeSet set;
      set.scene_id = id;
      set.z1 = TokenSequence::from_text(ds.vocab, t[0], true);
      set.z2 = TokenSequence::from_text(ds.vocab, t[1], true);
      set.source_a = set.source_b = "manual";
      negatives[id] = set;
    }
  }

  DiscFinetuneConfig dc = cfg_.disc;
  dc.seed = splitmix64(cfg_.seed ^ fnv1a64("disc-finetune"));
  dc.threads = cfg_.effective_threads();
  dc.curve_csv = run_dir_ / "logs" / "discriminator_curve.csv";

  const DiscFinetuneResult result =
      finetune_discriminator(*encoder, ds, negatives, ds.split.train, ds.split.val, dc);
  std::cout << "[finetune-discriminator] margin " << result.initial_margin << " -> "
            << result.final_margin << ", auc " << result.final_auc << "\n";

  encoder->merge_lora();
  nn::save_checkpoint(run_dir_ / checkpoint_rel("discriminator"), encoder->params(),
                      "discriminator", encoder->config().identity_hash());
  guard.finish({checkpoint_rel("discriminator"), "logs/discriminator_curve.csv"});
}

void Pipeline::train_scst_stage(RewardKind kind) {
  const std::string tag = scst_tag(kind);
  std::vector<std::string> inputs = {kScenes, kScenesShifted, kVocab, kSplits,
                                     checkpoint_rel("xe")};
  if (kind == RewardKind::raw_score) inputs.push_back(checkpoint_rel("encoder_base"));
  if (kind == RewardKind::discriminator) inputs.push_back(checkpoint_rel("discriminator"));

  StageGuard guard(*this, "train-scst", reward_kind_name(kind), inputs);
  if (guard.skip) return;
  Dataset& ds = dataset();

  auto model = load_captioner(checkpoint_rel("xe"), {"xe"});
  std::unique_ptr<DualEncoder> encoder;
  RewardFunction reward = [&] {
    switch (kind) {
      case RewardKind::cider:
        return RewardFunction::make_cider(&train_cider(), &ds.vocab);
      case RewardKind::raw_score:
        encoder = load_encoder(checkpoint_rel("encoder_base"), {"base"});
        return RewardFunction::make_encoder(kind, encoder.get(), cfg_.reward_w);
      case RewardKind::discriminator:
        encoder = load_encoder(checkpoint_rel("discriminator"), {"discriminator"});
        return RewardFunction::make_encoder(kind, encoder.get(), cfg_.reward_w);
    }
    throw Error("unknown reward kind");
  }();

  ScstConfig sc = cfg_.scst;
  sc.seed = splitmix64(cfg_.seed ^ fnv1a64("scst-" + std::string(reward_kind_name(kind))));
  sc.threads = cfg_.effective_threads();
  sc.metrics_log = run_dir_ / "logs" / (tag + "_metrics.jsonl");
  sc.eval_cider = &train_cider();
  std::filesystem::remove(sc.metrics_log);

  const ScstResult result = train_scst(*model, ds, reward, sc);
  std::cout << "[train-scst:" << reward_kind_name(kind) << "] val reward "
            << result.initial_val_reward << " -> " << result.final_val_reward << "\n";

  nn::save_checkpoint(run_dir_ / checkpoint_rel(tag), model->params(), "scst",
                      model->config().identity_hash());
  guard.finish({checkpoint_rel(tag), "logs/" + tag + "_metrics.jsonl"});
}

void Pipeline::evaluate_stage(const std::string& split) {
  std::vector<std::string> inputs = {kScenes, kScenesShifted, kVocab, kSplits,
                                     checkpoint_rel("encoder_base")};
  std::vector<std::string> present_tags;
  for (const auto& tag : canonical_tags()) {
    if (std::filesystem::exists(run_dir_ / checkpoint_rel(tag))) {
      present_tags.push_back(tag);
      inputs.push_back(checkpoint_rel(tag));
    }
  }
  if (present_tags.empty()) {
    throw Error("evaluate: no captioner checkpoints found; run train-xe first");
  }
  const bool have_disc = std::filesystem::exists(run_dir_ / checkpoint_rel("discriminator"));
  if (have_disc) inputs.push_back(checkpoint_rel("discriminator"));

  StageGuard guard(*this, "evaluate", split, inputs);
  if (guard.skip) return;
  Dataset& ds = dataset();

  const auto ids = split_ids(split);
  if (ids.empty()) throw Error("evaluate: split '" + split + "' is empty");

  auto retrieval = load_encoder(checkpoint_rel("encoder_base"), {"base"});
  std::unique_ptr<DualEncoder> disc;
  if (have_disc) disc = load_encoder(checkpoint_rel("discriminator"), {"discriminator"});

  EvalScorers scorers;
  scorers.cider = &train_cider();
  scorers.retrieval = retrieval.get();
  scorers.discriminator = disc.get();
  scorers.reward_w = cfg_.reward_w;

  std::vector<std::string> outputs;
  for (const auto& tag : present_tags) {
    auto model = load_captioner(checkpoint_rel(tag), {"xe", "reward-captioner", "scst"});
    EvalReport report = evaluate_checkpoint(*model, ds, ids, scorers, cfg_.eval_beam,
                                            cfg_.effective_threads());
    report.tag = tag;
    report.split = split;
    report.corpus_id = corpus_id(split);
    report.checkpoint_hashes["captioner"] = sha256_file(run_dir_ / checkpoint_rel(tag));
    report.checkpoint_hashes["retrieval_encoder"] =
        sha256_file(run_dir_ / checkpoint_rel("encoder_base"));
    if (have_disc) {
      report.checkpoint_hashes["discriminator"] =
          sha256_file(run_dir_ / checkpoint_rel("discriminator"));
    }
    const std::string rel = report_rel(tag, split);
    report.save(run_dir_ / rel);
    outputs.push_back(rel);
    std::cout << "[evaluate] " << tag << "/" << split << " written\n";
  }
  guard.finish(outputs);
}

}  // namespace caplab
