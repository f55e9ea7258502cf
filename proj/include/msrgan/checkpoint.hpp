#pragma once

#include <map>
#include <string>
#include <vector>

#include "msrgan/tensor.hpp"

namespace msrgan {

/// Flat named-tensor archive with a shape manifest, free-form string
/// metadata and a trailing content hash. Used for network weights, optimizer
/// state and the backbone weight file format.
struct CheckpointArchive {
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::map<std::string, std::string> meta;

    const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const CheckpointArchive& archive);

/// Throws ChecksumMismatch when the trailing hash does not match the
/// content, ParseError on malformed files.
CheckpointArchive load_checkpoint(const std::string& path);

/// Hash of the archive content (same value the file trailer carries).
std::string checkpoint_content_hash(const CheckpointArchive& archive);

} // namespace msrgan
