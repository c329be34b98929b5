#include "caplab/config.hpp"

#include <cstdlib>

#include "caplab/hash.hpp"
#include "caplab/util.hpp"

namespace caplab {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

const std::string& config_schema_json() {
  static const std::string schema = R"JSON({
  "$schema": "http://json-schema.org/draft-07/schema#",
  "title": "caplab run configuration",
  "type": "object",
  "additionalProperties": false,
  "properties": {
    "seed": {"type": "integer", "minimum": 0},
    "out_dir": {"type": "string"},
    "threads": {"type": "integer", "minimum": 0},
    "deterministic": {"type": "boolean"},
    "world": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "n_scenes": {"type": "integer", "minimum": 3},
        "n_shifted": {"type": "integer", "minimum": 0},
        "ratios": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 3, "maxItems": 3},
        "feature_slots": {"type": "integer", "minimum": 2},
        "feature_dim": {"type": "integer", "minimum": 1},
        "noise_sigma": {"type": "number", "minimum": 0},
        "max_len": {"type": "integer", "minimum": 4},
        "min_objects": {"type": "integer", "minimum": 1},
        "max_objects": {"type": "integer", "minimum": 1}
      }
    },
    "model": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "enc_layers": {"type": "integer", "minimum": 1},
        "dec_layers": {"type": "integer", "minimum": 1},
        "hidden": {"type": "integer", "minimum": 8},
        "heads": {"type": "integer", "minimum": 1},
        "ffn": {"type": "integer", "minimum": 8},
        "feature_pos_encoding": {"type": "boolean"}
      }
    },
    "encoder": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "layers": {"type": "integer", "minimum": 1},
        "hidden": {"type": "integer", "minimum": 8},
        "heads": {"type": "integer", "minimum": 1},
        "ffn": {"type": "integer", "minimum": 8},
        "embed_dim": {"type": "integer", "minimum": 4},
        "image_pos_encoding": {"type": "boolean"}
      }
    },
    "lora": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "rank": {"type": "integer", "minimum": 1},
        "alpha": {"type": "number", "exclusiveMinimum": 0}
      }
    },
    "reward": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "kind": {"type": "string", "enum": ["cider", "raw_score", "discriminator"]},
        "w": {"type": "number", "exclusiveMinimum": 0}
      }
    },
    "training": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "xe": {
          "type": "object",
          "additionalProperties": false,
          "properties": {
            "steps": {"type": "integer", "minimum": 0},
            "batch": {"type": "integer", "minimum": 1},
            "lr_peak": {"type": "number", "exclusiveMinimum": 0},
            "lr_floor": {"type": "number", "exclusiveMinimum": 0},
            "warmup": {"type": "integer", "minimum": 0},
            "plateau_end": {"type": "integer", "minimum": 0},
            "decay_end": {"type": "integer", "minimum": 0},
            "eval_interval": {"type": "integer", "minimum": 1}
          }
        },
        "encoder_pretrain": {
          "type": "object",
          "additionalProperties": false,
          "properties": {
            "steps": {"type": "integer", "minimum": 0},
            "batch": {"type": "integer", "minimum": 2},
            "lr": {"type": "number", "exclusiveMinimum": 0},
            "clean_extra_steps": {"type": "integer", "minimum": 0},
            "eval_interval": {"type": "integer", "minimum": 1}
          }
        },
        "scst": {
          "type": "object",
          "additionalProperties": false,
          "properties": {
            "steps": {"type": "integer", "minimum": 0},
            "batch": {"type": "integer", "minimum": 1},
            "lr": {"type": "number", "exclusiveMinimum": 0},
            "candidates": {"type": "integer", "minimum": 2},
            "candidate_mode": {"type": "string", "enum": ["beam", "sample"]},
            "temperature": {"type": "number", "exclusiveMinimum": 0},
            "eval_interval": {"type": "integer", "minimum": 1}
          }
        },
        "discriminator": {
          "type": "object",
          "additionalProperties": false,
          "properties": {
            "steps": {"type": "integer", "minimum": 0},
            "batch": {"type": "integer", "minimum": 2},
            "lr": {"type": "number", "exclusiveMinimum": 0},
            "weight_decay": {"type": "number", "minimum": 0},
            "eval_interval": {"type": "integer", "minimum": 1},
            "negatives_source": {"type": "string", "enum": ["self", "manual"]}
          }
        }
      }
    },
    "metrics": {
      "type": "object",
      "additionalProperties": false,
      "properties": {
        "beam_size": {"type": "integer", "minimum": 1}
      }
    }
  }
}
)JSON";
  return schema;
}

namespace {

bool type_matches(const json& v, const std::string& type) {
  if (type == "object") return v.is_object();
  if (type == "array") return v.is_array();
  if (type == "string") return v.is_string();
  if (type == "boolean") return v.is_boolean();
  if (type == "integer") return v.is_number_integer() || v.is_number_unsigned();
  if (type == "number") return v.is_number();
  throw Error("schema: unsupported type " + type);
}

}  // namespace

void validate_against_schema(const json& value, const json& schema, const std::string& path) {
  const std::string where = path.empty() ? "<root>" : path;
  if (schema.contains("type") && !type_matches(value, schema.at("type").get<std::string>())) {
    throw Error("config " + where + ": expected " + schema.at("type").get<std::string>());
  }
  if (schema.contains("enum")) {
    bool ok = false;
    for (const auto& e : schema.at("enum")) ok = ok || e == value;
    if (!ok) throw Error("config " + where + ": value not in enum " + schema.at("enum").dump());
  }
  if (value.is_number()) {
    const double x = value.get<double>();
    if (schema.contains("minimum") && x < schema.at("minimum").get<double>()) {
      throw Error("config " + where + ": below minimum " + schema.at("minimum").dump());
    }
    if (schema.contains("maximum") && x > schema.at("maximum").get<double>()) {
      throw Error("config " + where + ": above maximum " + schema.at("maximum").dump());
    }
    if (schema.contains("exclusiveMinimum") && x <= schema.at("exclusiveMinimum").get<double>()) {
      throw Error("config " + where + ": must exceed " + schema.at("exclusiveMinimum").dump());
    }
  }
  if (value.is_object()) {
    const json props = schema.value("properties", json::object());
    if (schema.value("additionalProperties", json(true)) == json(false)) {
      for (const auto& [k, _] : value.items()) {
        if (!props.contains(k)) throw Error("config " + where + ": unknown key '" + k + "'");
      }
    }
    if (schema.contains("required")) {
      for (const auto& k : schema.at("required")) {
        if (!value.contains(k.get<std::string>())) {
          throw Error("config " + where + ": missing required key '" + k.get<std::string>() + "'");
        }
      }
    }
    for (const auto& [k, sub] : props.items()) {
      if (value.contains(k)) validate_against_schema(value.at(k), sub, path + "/" + k);
    }
  }
  if (value.is_array()) {
    if (schema.contains("minItems") && value.size() < schema.at("minItems").get<std::size_t>()) {
      throw Error("config " + where + ": too few items");
    }
    if (schema.contains("maxItems") && value.size() > schema.at("maxItems").get<std::size_t>()) {
      throw Error("config " + where + ": too many items");
    }
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        validate_against_schema(value[i], schema.at("items"), path + "/" + std::to_string(i));
      }
    }
  }
}

RunConfig RunConfig::from_json(const json& j) {
  validate_against_schema(j, json::parse(config_schema_json()));

  RunConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.threads = j.value("threads", cfg.threads);
  cfg.deterministic = j.value("deterministic", cfg.deterministic);

  if (j.contains("world")) {
    const json& w = j.at("world");
    cfg.n_scenes = w.value("n_scenes", cfg.n_scenes);
    cfg.n_shifted = w.value("n_shifted", cfg.n_shifted);
    if (w.contains("ratios")) {
      const auto r = w.at("ratios").get<std::vector<double>>();
      cfg.ratios = {r[0], r[1], r[2]};
    }
    cfg.world.feature_slots = w.value("feature_slots", cfg.world.feature_slots);
    cfg.world.feature_dim = w.value("feature_dim", cfg.world.feature_dim);
    cfg.world.noise_sigma = w.value("noise_sigma", cfg.world.noise_sigma);
    cfg.world.max_len = w.value("max_len", cfg.world.max_len);
    cfg.world.min_objects = w.value("min_objects", cfg.world.min_objects);
    cfg.world.max_objects = w.value("max_objects", cfg.world.max_objects);
  }

  if (j.contains("model")) {
    const json& m = j.at("model");
    cfg.model.enc_layers = m.value("enc_layers", cfg.model.enc_layers);
    cfg.model.dec_layers = m.value("dec_layers", cfg.model.dec_layers);
    cfg.model.hidden = m.value("hidden", cfg.model.hidden);
    cfg.model.heads = m.value("heads", cfg.model.heads);
    cfg.model.ffn = m.value("ffn", cfg.model.ffn);
    cfg.model.feature_pos_encoding = m.value("feature_pos_encoding", cfg.model.feature_pos_encoding);
  }
  cfg.model.feature_dim = cfg.world.feature_dim;
  cfg.model.feature_slots = cfg.world.feature_slots;
  cfg.model.max_len = cfg.world.max_len;

  if (j.contains("encoder")) {
    const json& e = j.at("encoder");
    cfg.encoder.layers = e.value("layers", cfg.encoder.layers);
    cfg.encoder.hidden = e.value("hidden", cfg.encoder.hidden);
    cfg.encoder.heads = e.value("heads", cfg.encoder.heads);
    cfg.encoder.ffn = e.value("ffn", cfg.encoder.ffn);
    cfg.encoder.embed_dim = e.value("embed_dim", cfg.encoder.embed_dim);
    cfg.encoder.image_pos_encoding = e.value("image_pos_encoding", cfg.encoder.image_pos_encoding);
  }
  cfg.encoder.feature_dim = cfg.world.feature_dim;
  cfg.encoder.feature_slots = cfg.world.feature_slots;

  if (j.contains("lora")) {
    cfg.lora_rank = j.at("lora").value("rank", cfg.lora_rank);
    cfg.lora_alpha = j.at("lora").value("alpha", cfg.lora_alpha);
  }
  if (j.contains("reward")) {
    cfg.reward_kind = reward_kind_from_name(
        j.at("reward").value("kind", std::string(reward_kind_name(cfg.reward_kind))));
    cfg.reward_w = j.at("reward").value("w", cfg.reward_w);
  }

  const json training = j.value("training", json::object());
  {
    const json t = training.value("xe", json::object());
    cfg.xe.steps = t.value("steps", cfg.xe.steps);
    cfg.xe.batch = t.value("batch", cfg.xe.batch);
    cfg.xe.lr.peak = t.value("lr_peak", cfg.xe.lr.peak);
    cfg.xe.lr.floor = t.value("lr_floor", cfg.xe.lr.floor);
    cfg.xe.lr.warmup = t.value("warmup", cfg.xe.lr.warmup);
    cfg.xe.lr.plateau_end = t.value("plateau_end", cfg.xe.lr.plateau_end);
    cfg.xe.lr.decay_end = t.value("decay_end", cfg.xe.lr.decay_end);
    cfg.xe.eval_interval = t.value("eval_interval", cfg.xe.eval_interval);
    cfg.xe.lr.validate();
  }
  {
    const json t = training.value("encoder_pretrain", json::object());
    cfg.encoder_pretrain.steps = t.value("steps", cfg.encoder_pretrain.steps);
    cfg.encoder_pretrain.batch = t.value("batch", cfg.encoder_pretrain.batch);
    cfg.encoder_pretrain.lr = t.value("lr", cfg.encoder_pretrain.lr);
    cfg.encoder_pretrain.clean_extra_steps =
        t.value("clean_extra_steps", cfg.encoder_pretrain.clean_extra_steps);
    cfg.encoder_pretrain.eval_interval = t.value("eval_interval", cfg.encoder_pretrain.eval_interval);
  }
  {
    const json t = training.value("scst", json::object());
    cfg.scst.steps = t.value("steps", cfg.scst.steps);
    cfg.scst.batch = t.value("batch", cfg.scst.batch);
    cfg.scst.lr = t.value("lr", cfg.scst.lr);
    cfg.scst.candidates = t.value("candidates", cfg.scst.candidates);
    cfg.scst.candidate_mode =
        t.value("candidate_mode", std::string("beam")) == "sample" ? CandidateMode::sample
                                                                   : CandidateMode::beam;
    cfg.scst.temperature = t.value("temperature", cfg.scst.temperature);
    cfg.scst.eval_interval = t.value("eval_interval", cfg.scst.eval_interval);
  }
  {
    const json t = training.value("discriminator", json::object());
    cfg.disc.steps = t.value("steps", cfg.disc.steps);
    cfg.disc.batch = t.value("batch", cfg.disc.batch);
    cfg.disc.lr = t.value("lr", cfg.disc.lr);
    cfg.disc.weight_decay = t.value("weight_decay", cfg.disc.weight_decay);
    cfg.disc.eval_interval = t.value("eval_interval", cfg.disc.eval_interval);
    cfg.negatives_source = t.value("negatives_source", cfg.negatives_source);
  }
  cfg.disc.lora_rank = cfg.lora_rank;
  cfg.disc.lora_alpha = cfg.lora_alpha;

  if (j.contains("metrics")) {
    cfg.eval_beam = j.at("metrics").value("beam_size", cfg.eval_beam);
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

ojson RunConfig::to_json() const {
  ojson j;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["threads"] = threads;
  j["deterministic"] = deterministic;
  j["world"] = {{"n_scenes", n_scenes},
                {"n_shifted", n_shifted},
                {"ratios", ratios},
                {"feature_slots", world.feature_slots},
                {"feature_dim", world.feature_dim},
                {"noise_sigma", world.noise_sigma},
                {"max_len", world.max_len},
                {"min_objects", world.min_objects},
                {"max_objects", world.max_objects}};
  j["model"] = {{"enc_layers", model.enc_layers}, {"dec_layers", model.dec_layers},
                {"hidden", model.hidden},         {"heads", model.heads},
                {"ffn", model.ffn},               {"feature_pos_encoding", model.feature_pos_encoding}};
  j["encoder"] = {{"layers", encoder.layers}, {"hidden", encoder.hidden},
                  {"heads", encoder.heads},   {"ffn", encoder.ffn},
                  {"embed_dim", encoder.embed_dim},
                  {"image_pos_encoding", encoder.image_pos_encoding}};
  j["lora"] = {{"rank", lora_rank}, {"alpha", lora_alpha}};
  j["reward"] = {{"kind", reward_kind_name(reward_kind)}, {"w", reward_w}};
  j["training"] = {
      {"xe",
       {{"steps", xe.steps},
        {"batch", xe.batch},
        {"lr_peak", xe.lr.peak},
        {"lr_floor", xe.lr.floor},
        {"warmup", xe.lr.warmup},
        {"plateau_end", xe.lr.plateau_end},
        {"decay_end", xe.lr.decay_end},
        {"eval_interval", xe.eval_interval}}},
      {"encoder_pretrain",
       {{"steps", encoder_pretrain.steps},
        {"batch", encoder_pretrain.batch},
        {"lr", encoder_pretrain.lr},
        {"clean_extra_steps", encoder_pretrain.clean_extra_steps},
        {"eval_interval", encoder_pretrain.eval_interval}}},
      {"scst",
       {{"steps", scst.steps},
        {"batch", scst.batch},
        {"lr", scst.lr},
        {"candidates", scst.candidates},
        {"candidate_mode", scst.candidate_mode == CandidateMode::sample ? "sample" : "beam"},
        {"temperature", scst.temperature},
        {"eval_interval", scst.eval_interval}}},
      {"discriminator",
       {{"steps", disc.steps},
        {"batch", disc.batch},
        {"lr", disc.lr},
        {"weight_decay", disc.weight_decay},
        {"eval_interval", disc.eval_interval},
        {"negatives_source", negatives_source}}}};
  j["metrics"] = {{"beam_size", eval_beam}};
  return j;
}

std::string RunConfig::config_hash() const { return sha256_hex(to_json().dump()); }

void RunConfig::apply_env_overrides() {
  if (const char* dir = std::getenv("CAPLAB_OUT_DIR")) out_dir = dir;
  if (const char* th = std::getenv("CAPLAB_THREADS")) {
    const long v = std::strtol(th, nullptr, 10);
    if (v > 0) threads = static_cast<std::size_t>(v);
  }
}

std::size_t RunConfig::effective_threads() const {
  if (deterministic) return 1;
  return resolve_threads(threads);
}

}  // namespace caplab
