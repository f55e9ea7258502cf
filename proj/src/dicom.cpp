#include "msrgan/dicom.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "msrgan/common.hpp"

namespace msrgan {

std::string to_string(SeriesKind k) {
    switch (k) {
        case SeriesKind::coronal: return "coronal";
        case SeriesKind::sagittal: return "sagittal";
        case SeriesKind::axial: return "axial";
    }
    return "axial";
}

SeriesKind series_kind_from_string(const std::string& s) {
    if (s == "coronal") return SeriesKind::coronal;
    if (s == "sagittal") return SeriesKind::sagittal;
    if (s == "axial") return SeriesKind::axial;
    throw ParseError("unknown series kind: " + s);
}

namespace {

struct Cursor {
    const uint8_t* p;
    size_t n;
    size_t off = 0;

    bool eof() const { return off >= n; }
    size_t remaining() const { return n - off; }

    void need(size_t k, const char* what) const {
        if (off + k > n) throw ParseError(std::string("truncated DICOM while reading ") + what);
    }
    uint16_t u16(const char* what) {
        need(2, what);
        const uint16_t v = uint16_t(p[off]) | uint16_t(p[off + 1]) << 8;
        off += 2;
        return v;
    }
    uint32_t u32(const char* what) {
        need(4, what);
        uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | p[off + size_t(i)];
        off += 4;
        return v;
    }
    std::string bytes(size_t k, const char* what) {
        need(k, what);
        std::string s(reinterpret_cast<const char*>(p + off), k);
        off += k;
        return s;
    }
    void skip(size_t k, const char* what) {
        need(k, what);
        off += k;
    }
};

bool is_short_vr(const std::string& vr) {
    // Explicit VR with 2-byte length field.
    static const char* kShort[] = {"AE", "AS", "AT", "CS", "DA", "DS", "DT", "FL", "FD", "IS", "LO",
                                   "LT", "PN", "SH", "SL", "SS", "ST", "TM", "UI", "UL", "US"};
    for (const char* v : kShort)
        if (vr == v) return true;
    return false;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \0", 0, 2);
    size_t e = s.find_last_not_of(" \0", std::string::npos, 2);
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

// DS values may be multivalued ("40\400"); the first value wins.
real parse_ds_first(const std::string& raw, bool& ok) {
    const std::string s = trim(raw);
    if (s.empty()) {
        ok = false;
        return 0;
    }
    try {
        size_t pos = 0;
        const real v = std::stod(s, &pos);
        ok = pos > 0;
        return v;
    } catch (...) {
        ok = false;
        return 0;
    }
}

struct Element {
    uint16_t group = 0, elem = 0;
    std::string vr;
    uint32_t length = 0;
    size_t value_off = 0;
};

// Reads one element header at the cursor. `explicit_vr` selects the syntax.
Element read_element(Cursor& c, bool explicit_vr) {
    Element e;
    e.group = c.u16("element group");
    e.elem = c.u16("element tag");
    const bool delimiter_item = e.group == 0xFFFE;
    if (explicit_vr && !delimiter_item) {
        e.vr = c.bytes(2, "VR");
        if (is_short_vr(e.vr)) {
            e.length = c.u16("element length");
        } else {
            c.skip(2, "VR padding");
            e.length = c.u32("element length");
        }
    } else {
        e.length = c.u32("element length");
    }
    e.value_off = c.off;
    return e;
}

// Sequences of undefined length are walked item by item until the sequence
// delimiter; nested scopes are tracked by depth.
void skip_undefined_length(Cursor& c, bool explicit_vr) {
    int depth = 1;
    while (depth > 0) {
        if (c.eof()) throw ParseError("unterminated undefined-length sequence");
        Element e = read_element(c, explicit_vr);
        if (e.group == 0xFFFE && e.elem == 0xE0DD) {
            --depth;
        } else if (e.group == 0xFFFE && (e.elem == 0xE000 || e.elem == 0xE00D)) {
            if (e.elem == 0xE000 && e.length == 0xFFFFFFFF) continue;  // open item
            if (e.length != 0xFFFFFFFF && e.length > 0) c.skip(e.length, "item value");
        } else if (e.length == 0xFFFFFFFF) {
            ++depth;
        } else {
            c.skip(e.length, "sequence element value");
        }
    }
}

} // namespace

RawSlice load_dicom_slice(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open DICOM file: " + path);
    std::vector<uint8_t> raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Cursor c{raw.data(), raw.size()};
    if (raw.size() < 132 + 8) throw ParseError("file too small for DICOM: " + path);
    c.skip(128, "preamble");
    if (c.bytes(4, "magic") != "DICM") throw ParseError("missing DICM magic: " + path);

    // File meta group is always explicit VR.
    bool explicit_vr = true;
    std::string transfer_syntax;
    while (!c.eof()) {
        const size_t mark = c.off;
        Element e = read_element(c, true);
        if (e.group != 0x0002) {
            c.off = mark;
            break;
        }
        const std::string val = c.bytes(e.length, "meta value");
        if (e.elem == 0x0010) transfer_syntax = trim(val);
    }
    if (transfer_syntax == "1.2.840.10008.1.2")
        explicit_vr = false;  // implicit VR little endian
    else if (!transfer_syntax.empty() && transfer_syntax != "1.2.840.10008.1.2.1")
        throw ParseError("unsupported transfer syntax " + transfer_syntax + ": " + path);

    RawSlice out;
    bool have_wl = false, have_ww = false, have_pixels = false;
    int bits_allocated = 16;

    while (!c.eof()) {
        Element e = read_element(c, explicit_vr);
        if (e.length == 0xFFFFFFFF) {
            if (e.group == 0x7FE0 && e.elem == 0x0010)
                throw ParseError("encapsulated pixel data unsupported: " + path);
            skip_undefined_length(c, explicit_vr);
            continue;
        }
        const uint32_t tag = uint32_t(e.group) << 16 | e.elem;
        switch (tag) {
            case 0x00100020: out.patient_id = trim(c.bytes(e.length, "PatientID")); break;
            case 0x0008103E: {
                std::string desc = trim(c.bytes(e.length, "SeriesDescription"));
                std::transform(desc.begin(), desc.end(), desc.begin(),
                               [](unsigned char ch) { return char(std::tolower(ch)); });
                if (desc.find("cor") != std::string::npos)
                    out.series_kind = SeriesKind::coronal;
                else if (desc.find("sag") != std::string::npos)
                    out.series_kind = SeriesKind::sagittal;
                else
                    out.series_kind = SeriesKind::axial;
                break;
            }
            case 0x00200013: {
                bool ok = false;
                const real v = parse_ds_first(c.bytes(e.length, "InstanceNumber"), ok);
                if (ok && v >= 0) out.slice_index = int(v);
                break;
            }
            case 0x00280010: {
                Cursor vc{raw.data() + e.value_off, e.length};
                out.rows = vc.u16("Rows");
                c.skip(e.length, "Rows");
                break;
            }
            case 0x00280011: {
                Cursor vc{raw.data() + e.value_off, e.length};
                out.cols = vc.u16("Columns");
                c.skip(e.length, "Columns");
                break;
            }
            case 0x00280100: {
                Cursor vc{raw.data() + e.value_off, e.length};
                bits_allocated = vc.u16("BitsAllocated");
                c.skip(e.length, "BitsAllocated");
                break;
            }
            case 0x00281050: {
                bool ok = false;
                const real v = parse_ds_first(c.bytes(e.length, "WindowCenter"), ok);
                if (ok) {
                    out.wl = v;
                    have_wl = true;
                }
                break;
            }
            case 0x00281051: {
                bool ok = false;
                const real v = parse_ds_first(c.bytes(e.length, "WindowWidth"), ok);
                if (ok && v > 0) {
                    out.ww = v;
                    have_ww = true;
                }
                break;
            }
            case 0x7FE00010: {
                if (out.rows <= 0 || out.cols <= 0)
                    throw ParseError("pixel data before image dimensions: " + path);
                const size_t count = size_t(out.rows) * size_t(out.cols);
                if (bits_allocated == 16) {
                    if (e.length < count * 2) throw ParseError("pixel data shorter than Rows*Cols: " + path);
                    out.pixels.resize(count);
                    c.need(count * 2, "PixelData");
                    for (size_t i = 0; i < count; ++i) {
                        out.pixels[i] =
                            uint16_t(raw[e.value_off + 2 * i]) | uint16_t(raw[e.value_off + 2 * i + 1]) << 8;
                    }
                } else if (bits_allocated == 8) {
                    if (e.length < count) throw ParseError("pixel data shorter than Rows*Cols: " + path);
                    out.pixels.resize(count);
                    for (size_t i = 0; i < count; ++i) out.pixels[i] = raw[e.value_off + i];
                } else {
                    throw ParseError("unsupported BitsAllocated: " + path);
                }
                c.off = e.value_off + e.length;
                have_pixels = true;
                break;
            }
            default: c.skip(e.length, "element value"); break;
        }
    }

    if (!have_pixels) throw MissingPixelData("no pixel data element in " + path);
    if (out.rows <= 0 || out.cols <= 0 || out.pixels.empty())
        throw ParseError("empty pixel grid in " + path);

    if (!have_wl || !have_ww) {
        uint16_t lo = out.pixels[0], hi = out.pixels[0];
        for (uint16_t v : out.pixels) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (!have_wl) out.wl = (real(lo) + real(hi)) / real(2);
        if (!have_ww) out.ww = std::max<real>(1, real(hi) - real(lo));
    }
    return out;
}

ImageU8 apply_window(const RawSlice& slice) {
    if (slice.ww <= 0) throw DegenerateWindow("window width must be positive");
    ImageU8 out(slice.rows, slice.cols);
    const real lo = slice.wl - slice.ww / real(2);
    const real inv = real(1) / slice.ww;
    for (size_t i = 0; i < slice.pixels.size(); ++i) {
        const real t = std::clamp((real(slice.pixels[i]) - lo) * inv, real(0), real(1));
        out.pixels[i] = uint8_t(std::lround(t * real(255)));
    }
    return out;
}

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(uint8_t(v & 0xFF));
    out.push_back(uint8_t(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

void put_element_short(std::vector<uint8_t>& out, uint16_t group, uint16_t elem, const char* vr,
                       std::string value) {
    if (value.size() % 2) value.push_back(vr[0] == 'U' && vr[1] == 'I' ? '\0' : ' ');
    put_u16(out, group);
    put_u16(out, elem);
    out.push_back(uint8_t(vr[0]));
    out.push_back(uint8_t(vr[1]));
    put_u16(out, uint16_t(value.size()));
    out.insert(out.end(), value.begin(), value.end());
}

} // namespace

void write_synthetic_dicom(const std::string& path, const SyntheticDicom& d) {
    if (d.rows <= 0 || d.cols <= 0 || d.pixels.size() != size_t(d.rows) * size_t(d.cols))
        throw Error("write_synthetic_dicom: bad pixel grid");

    std::vector<uint8_t> out(128, 0);
    out.insert(out.end(), {'D', 'I', 'C', 'M'});

    // Minimal meta group: just the transfer syntax (explicit VR LE).
    std::vector<uint8_t> meta;
    put_element_short(meta, 0x0002, 0x0010, "UI", "1.2.840.10008.1.2.1");
    put_u16(out, 0x0002);
    put_u16(out, 0x0000);
    out.push_back('U');
    out.push_back('L');
    put_u16(out, 4);
    put_u32(out, uint32_t(meta.size()));
    out.insert(out.end(), meta.begin(), meta.end());

    put_element_short(out, 0x0008, 0x103E, "LO", d.series_description);
    put_element_short(out, 0x0010, 0x0020, "LO", d.patient_id);
    put_element_short(out, 0x0020, 0x0013, "IS", std::to_string(d.instance_number));

    auto put_us = [&out](uint16_t group, uint16_t elem, uint16_t v) {
        put_u16(out, group);
        put_u16(out, elem);
        out.push_back('U');
        out.push_back('S');
        put_u16(out, 2);
        put_u16(out, v);
    };
    put_us(0x0028, 0x0010, uint16_t(d.rows));
    put_us(0x0028, 0x0011, uint16_t(d.cols));
    put_us(0x0028, 0x0100, 16);  // BitsAllocated
    put_us(0x0028, 0x0103, 0);   // unsigned

    auto fmt_ds = [](real v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%g", double(v));
        return std::string(buf);
    };
    if (d.include_window) {
        put_element_short(out, 0x0028, 0x1050, "DS", fmt_ds(d.wl));
        put_element_short(out, 0x0028, 0x1051, "DS", fmt_ds(d.ww));
    }

    put_u16(out, 0x7FE0);
    put_u16(out, 0x0010);
    out.push_back('O');
    out.push_back('W');
    put_u16(out, 0);  // reserved
    put_u32(out, uint32_t(d.pixels.size() * 2));
    for (uint16_t v : d.pixels) put_u16(out, v);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
    if (!f) throw Error("short write: " + path);
}

} // namespace msrgan
