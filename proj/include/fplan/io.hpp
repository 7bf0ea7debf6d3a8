#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fplan/dataset.hpp"
#include "fplan/model.hpp"
#include "fplan/scene.hpp"
#include "fplan/vocabulary.hpp"

namespace fplan::io {

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);

// FNV-1a over raw bytes; used for artifact hashes and cache keys.
uint64_t fnv1a64(const std::string& bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
uint64_t file_hash(const std::string& path);

// Packs doubles as little-endian IEEE-754 binary.
std::string pack_f64(const std::vector<double>& values);
std::vector<double> unpack_f64(const std::string& bytes);

// Vocabulary file: JSON header plus base64 anchor blocks (float64 LE arrays,
// 1-byte validity flags). Readers reject version mismatches.
std::string vocabulary_to_json(const TrajectoryVocabulary& vocab);
TrajectoryVocabulary vocabulary_from_json(const std::string& text);
void save_vocabulary(const TrajectoryVocabulary& vocab, const std::string& path);
TrajectoryVocabulary load_vocabulary(const std::string& path);

// Scenario scripts as single-line JSON records (JSONL dataset rows).
std::string script_to_json(const ScenarioScript& script);
ScenarioScript script_from_json(const std::string& text);

std::string trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const std::string& text);

// Dataset rows: one JSON object per line {id, t0, script, expert}.
std::string sample_to_json(const ScenarioSample& sample);
ScenarioSample sample_from_json(const std::string& text);
void save_dataset(const std::vector<ScenarioSample>& samples, const std::string& path);
std::vector<ScenarioSample> load_dataset(const std::string& path);

// Checkpoints: <prefix>.json manifest (shapes, config, step) plus
// <prefix>.bin with the flattened parameters as float64 LE.
struct Checkpoint {
  ModelParams params;
  int step = 0;
  uint64_t vocab_hash = 0;
};
void save_checkpoint(const ModelParams& params, int step, uint64_t vocab_hash,
                     const std::string& prefix);
Checkpoint load_checkpoint(const std::string& prefix);

}  // namespace fplan::io
