#pragma once
// File formats: whitespace-separated edge lists, flat key=value configs, and
// the binary model container (magic "CRNE", little-endian, f32 payload).

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "crane/sketch.hpp"
#include "crane/training.hpp"

namespace crane {

struct ParseError : std::runtime_error {
  std::size_t line;
  ParseError(std::size_t line_no, const std::string& what)
      : std::runtime_error("line " + std::to_string(line_no) + ": " + what),
        line(line_no) {}
};

struct ParsedStream {
  std::vector<EdgeUpdate> updates;
  std::uint64_t reduced_ids = 0;  // ids folded mod 2^32 (warn, don't fail)
};

// `origin destination weight [timestamp]`, whitespace separated; lines that
// are blank or start with '#' are skipped; the timestamp column is ignored.
ParsedStream parse_edge_list(std::istream& in);
ParsedStream load_edge_list(const std::string& path);

// Flat `key=value` lines ('#' comments, blank lines ok). Unknown keys are
// rejected so typos can't silently fall back to defaults.
std::map<std::string, std::string> parse_config(std::istream& in);
std::map<std::string, std::string> load_config(const std::string& path);

// Applies config keys onto training/task parameters; throws
// std::invalid_argument on unknown keys or malformed values.
void apply_config(const std::map<std::string, std::string>& kv,
                  TrainConfig& train, TaskConfig& task);

struct LoadedModel {
  CraneModel model;
  std::vector<Tensor> memories;  // active layers; may be empty (L = 0 never
                                 // serialized; a fresh model stores L = 1)
};

// Serializes model parameters, BN running statistics, and the given layer
// memories at f32 precision. load(save(x)) is bit-exact at 32 bits.
void save_model(const CraneModel& model, std::span<const Tensor> memories,
                const std::string& path);
LoadedModel load_model(const std::string& path);

}  // namespace crane
