#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "structrep/adapter.hpp"
#include "structrep/metagradnorm.hpp"
#include "structrep/trainer.hpp"

namespace structrep {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Trained state of one run. Head and meta-state are optional sections.
struct Checkpoint {
    int fold_id = 0;
    Adapter adapter;
    std::optional<TaskHead> head;
    std::optional<MetaState> meta;

    bool operator==(const Checkpoint&) const = default;
};

/// Little-endian binary encoding: magic, version, section flags, fold id, adapter, then the
/// optional sections. Doubles are stored as their exact bit patterns.
std::string encode_checkpoint(const Checkpoint& checkpoint);
/// Throws InputError on a bad magic or version ("version mismatch"), truncation or trailing bytes.
Checkpoint decode_checkpoint(std::string_view bytes);

void checkpoint_save(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint checkpoint_load(const std::filesystem::path& path);
/// Also checks the stored dimensions against the expected embedding dimension and rank
/// (InputError "dimension mismatch" otherwise).
Checkpoint checkpoint_load(const std::filesystem::path& path, std::size_t dim, std::size_t rank);

}  // namespace structrep
