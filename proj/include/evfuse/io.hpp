#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "evfuse/events.hpp"
#include "evfuse/tensor.hpp"

namespace evfuse::io {

// 8-bit grayscale image (PGM, maxval 255). Also used for class-id masks.
struct ImageU8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // row-major
};

ImageU8 read_pgm(const std::string& path);
void write_pgm(const std::string& path, const ImageU8& img);

// P6 color image; used for polarity renderings (positive -> blue,
// negative -> red).
void write_ppm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& rgb);

// EVT1: magic "EVT1", u32 LE width, u32 height, u64 count, then per event
// (u16 x, u16 y, f64 t, i8 p, 3 zero pad bytes).
void write_evt1(const std::string& path, const EventStream& s);
EventStream read_evt1(const std::string& path);

// CSV alternative: header "x,y,t,p", one event per row, t round-trip exact.
void write_events_csv(const std::string& path, const EventStream& s);
EventStream read_events_csv(const std::string& path);

// Dispatch on the ".csv" extension, EVT1 otherwise.
void write_events(const std::string& path, const EventStream& s);
EventStream read_events(const std::string& path);

// VOL1: magic "VOL1", u32 bins_pos, u32 bins_neg, u32 width, u32 height,
// then (B+ + B-) * H * W f64 values, bin-major row-major.
void write_vol1(const std::string& path, const EventVolume& v);
EventVolume read_vol1(const std::string& path);

// CKPT: magic "CKPT", u32 tensor count, then per tensor u16 name length,
// name bytes, u32 rank, rank u32 extents, f64 payload.
struct NamedTensor {
    std::string name;
    Shape shape;
    std::vector<double> values;
};
void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

// FNV-1a 64 of the file bytes as fixed-width hex, for run reports.
std::string file_hash_hex(const std::string& path);

}  // namespace evfuse::io
