#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace semdial {

// Entry point of the `semdial` tool. Subcommands: toy, annotate,
// train-classifier, stats, train, generate, eval, serve. Returns the process
// exit code; usage errors print to `err` and return nonzero.
//
// Every run writes a manifest (the subcommand, its fully resolved settings,
// seeds, and FNV-1a fingerprints of input and output files) next to its
// outputs: <dir>/manifest.json for directory outputs, <file>.manifest.json
// for single-file outputs.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Environment variable naming the checkpoint cache directory. A checkpoint
// argument that is not an existing path is looked up there, and `train`
// writes into it when no output directory is given.
inline constexpr const char* kCacheDirEnv = "SEMDIAL_CACHE_DIR";

// `arg` itself, `arg`/model.ckpt, or the same two under the cache directory;
// throws IoError when none exists.
std::filesystem::path resolve_checkpoint(const std::string& arg);

std::string file_fingerprint(const std::filesystem::path& path);

}  // namespace semdial
