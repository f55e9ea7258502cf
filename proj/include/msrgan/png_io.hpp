#pragma once

#include <string>
#include <vector>

#include "msrgan/image.hpp"

namespace msrgan {

/// Encodes to 8-bit grayscale PNG bytes (non-gray inputs are rejected on
/// read, not silently converted).
std::vector<uint8_t> encode_png(const ImageU8& img);
void write_png(const std::string& path, const ImageU8& img);

/// Reads any 8/16-bit PNG and reduces it to 8-bit grayscale.
ImageU8 read_png(const std::string& path);

} // namespace msrgan
