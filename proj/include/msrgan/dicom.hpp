#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "msrgan/image.hpp"

namespace msrgan {

enum class SeriesKind { coronal, sagittal, axial };

std::string to_string(SeriesKind k);
SeriesKind series_kind_from_string(const std::string& s);

/// One decoded 16-bit slice plus the window metadata needed to render it.
struct RawSlice {
    std::vector<uint16_t> pixels;  // row-major, rows x cols
    int rows = 0, cols = 0;
    real wl = 0;  // window level
    real ww = 0;  // window width, > 0
    std::string patient_id;
    SeriesKind series_kind = SeriesKind::axial;
    int slice_index = 0;

    uint16_t at(int y, int x) const { return pixels[size_t(y) * size_t(cols) + size_t(x)]; }
};

/// Reads a single-frame DICOM file.
///
/// This is a deliberately small reader: explicit- and implicit-VR little
/// endian, uncompressed 16-bit (or 8-bit) monochrome pixel data, sequences
/// skipped. When window tags are absent the full observed intensity range is
/// used (wl = midpoint, ww = range), which loses nothing.
/// Throws ParseError for malformed files and MissingPixelData when no pixel
/// element is present.
RawSlice load_dicom_slice(const std::string& path);

/// Linear window mapping to 8 bits:
/// out = round(255 * clip((x - (wl - ww/2)) / ww, 0, 1)).
/// Throws DegenerateWindow if ww <= 0.
ImageU8 apply_window(const RawSlice& slice);

/// Fields for writing the synthetic studies used by tests and the `synth`
/// demo-data command.
struct SyntheticDicom {
    std::vector<uint16_t> pixels;
    int rows = 0, cols = 0;
    std::string patient_id = "P000";
    std::string series_description = "t2 axial";
    int instance_number = 1;
    bool include_window = true;
    real wl = 0, ww = 0;
};

void write_synthetic_dicom(const std::string& path, const SyntheticDicom& d);

} // namespace msrgan
