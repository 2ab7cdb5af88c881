#include "evfuse/io.hpp"

#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "evfuse/common.hpp"

namespace evfuse::io {

namespace {

[[noreturn]] void fail(const std::string& what, const std::string& path) {
    throw std::runtime_error(what + ": " + path);
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) fail("cannot open for writing", path);
    return f;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail("cannot open for reading", path);
    return f;
}

void put_u16(std::ostream& o, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                                static_cast<unsigned char>(v >> 8)};
    o.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& o, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    o.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& o, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    o.write(reinterpret_cast<const char*>(b), 8);
}

void put_f64(std::ostream& o, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    put_u64(o, u);
}

std::uint16_t get_u16(std::istream& i) {
    unsigned char b[2];
    i.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint32_t get_u32(std::istream& i) {
    unsigned char b[4];
    i.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | b[k];
    return v;
}

std::uint64_t get_u64(std::istream& i) {
    unsigned char b[8];
    i.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int k = 7; k >= 0; --k) v = (v << 8) | b[k];
    return v;
}

double get_f64(std::istream& i) {
    const std::uint64_t u = get_u64(i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

void expect_magic(std::istream& i, const char* magic, const std::string& path) {
    char buf[4];
    i.read(buf, 4);
    if (!i || std::memcmp(buf, magic, 4) != 0)
        throw std::runtime_error(std::string("bad magic, expected ") + magic + ": " + path);
}

// PGM header token, skipping whitespace and '#' comments.
int pgm_token(std::istream& s, const std::string& path) {
    int c = s.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = s.get();
        } else if (std::isspace(c)) {
            c = s.get();
        } else {
            break;
        }
    }
    if (c == EOF || !std::isdigit(c)) fail("malformed PGM header", path);
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = s.get();
    }
    return v;
}

}  // namespace

ImageU8 read_pgm(const std::string& path) {
    auto f = open_in(path);
    char m[2];
    f.read(m, 2);
    if (!f || m[0] != 'P' || m[1] != '5') fail("not a binary PGM (P5)", path);
    ImageU8 img;
    img.width = pgm_token(f, path);
    img.height = pgm_token(f, path);
    const int maxval = pgm_token(f, path);
    if (img.width <= 0 || img.height <= 0 || maxval != 255) fail("unsupported PGM geometry", path);
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    f.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (!f) fail("truncated PGM payload", path);
    return img;
}

void write_pgm(const std::string& path, const ImageU8& img) {
    require(static_cast<long>(img.pixels.size()) == static_cast<long>(img.width) * img.height,
            "write_pgm: size mismatch");
    auto f = open_out(path);
    f << "P5\n" << img.width << " " << img.height << "\n255\n";
    f.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
    if (!f) fail("write failed", path);
}

void write_ppm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& rgb) {
    require(static_cast<long>(rgb.size()) == 3L * width * height, "write_ppm: size mismatch");
    auto f = open_out(path);
    f << "P6\n" << width << " " << height << "\n255\n";
    f.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
    if (!f) fail("write failed", path);
}

void write_evt1(const std::string& path, const EventStream& s) {
    require(s.width > 0 && s.width <= 0xffff && s.height > 0 && s.height <= 0xffff,
            "write_evt1: geometry does not fit u16 coordinates");
    auto f = open_out(path);
    f.write("EVT1", 4);
    put_u32(f, static_cast<std::uint32_t>(s.width));
    put_u32(f, static_cast<std::uint32_t>(s.height));
    put_u64(f, s.events.size());
    for (const Event& e : s.events) {
        put_u16(f, static_cast<std::uint16_t>(e.x));
        put_u16(f, static_cast<std::uint16_t>(e.y));
        put_f64(f, e.t);
        const char p = static_cast<char>(e.p);
        f.write(&p, 1);
        const char pad[3] = {0, 0, 0};
        f.write(pad, 3);
    }
    if (!f) fail("write failed", path);
}

EventStream read_evt1(const std::string& path) {
    auto f = open_in(path);
    expect_magic(f, "EVT1", path);
    EventStream s;
    s.width = static_cast<int>(get_u32(f));
    s.height = static_cast<int>(get_u32(f));
    const std::uint64_t n = get_u64(f);
    if (!f) fail("truncated EVT1 header", path);
    s.events.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        Event e;
        e.x = get_u16(f);
        e.y = get_u16(f);
        e.t = get_f64(f);
        char p;
        f.read(&p, 1);
        char pad[3];
        f.read(pad, 3);
        e.p = static_cast<int>(p);
        s.events.push_back(e);
    }
    if (!f) fail("truncated EVT1 payload", path);
    s.validate();
    return s;
}

void write_events_csv(const std::string& path, const EventStream& s) {
    auto f = open_out(path);
    f << "x,y,t,p\n";
    char buf[64];
    for (const Event& e : s.events) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.t);
        f << e.x << "," << e.y << "," << buf << "," << e.p << "\n";
    }
    if (!f) fail("write failed", path);
}

EventStream read_events_csv(const std::string& path) {
    auto f = open_in(path);
    std::string line;
    if (!std::getline(f, line) || line.rfind("x,y,t,p", 0) != 0)
        fail("missing x,y,t,p header", path);
    EventStream s;
    int max_x = 0, max_y = 0;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        Event e;
        char* end = nullptr;
        const char* p = line.c_str();
        e.x = static_cast<int>(std::strtol(p, &end, 10));
        if (*end != ',') fail("malformed CSV row", path);
        p = end + 1;
        e.y = static_cast<int>(std::strtol(p, &end, 10));
        if (*end != ',') fail("malformed CSV row", path);
        p = end + 1;
        e.t = std::strtod(p, &end);
        if (*end != ',') fail("malformed CSV row", path);
        p = end + 1;
        e.p = static_cast<int>(std::strtol(p, &end, 10));
        s.events.push_back(e);
        max_x = std::max(max_x, e.x);
        max_y = std::max(max_y, e.y);
    }
    // CSV carries no geometry; adopt the tightest bound.
    s.width = max_x + 1;
    s.height = max_y + 1;
    s.validate();
    return s;
}

namespace {
bool has_suffix(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}
}  // namespace

void write_events(const std::string& path, const EventStream& s) {
    if (has_suffix(path, ".csv"))
        write_events_csv(path, s);
    else
        write_evt1(path, s);
}

EventStream read_events(const std::string& path) {
    return has_suffix(path, ".csv") ? read_events_csv(path) : read_evt1(path);
}

void write_vol1(const std::string& path, const EventVolume& v) {
    auto f = open_out(path);
    f.write("VOL1", 4);
    put_u32(f, static_cast<std::uint32_t>(v.bins_pos));
    put_u32(f, static_cast<std::uint32_t>(v.bins_neg));
    put_u32(f, static_cast<std::uint32_t>(v.width));
    put_u32(f, static_cast<std::uint32_t>(v.height));
    for (double d : v.data) put_f64(f, d);
    if (!f) fail("write failed", path);
}

EventVolume read_vol1(const std::string& path) {
    auto f = open_in(path);
    expect_magic(f, "VOL1", path);
    EventVolume v;
    v.bins_pos = static_cast<int>(get_u32(f));
    v.bins_neg = static_cast<int>(get_u32(f));
    v.width = static_cast<int>(get_u32(f));
    v.height = static_cast<int>(get_u32(f));
    if (!f || v.bins_pos < 1 || v.bins_neg < 1 || v.width < 1 || v.height < 1)
        fail("bad VOL1 header", path);
    const long n = static_cast<long>(v.bins_pos + v.bins_neg) * v.height * v.width;
    v.data.resize(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) v.data[static_cast<std::size_t>(i)] = get_f64(f);
    if (!f) fail("truncated VOL1 payload", path);
    return v;
}

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
    auto f = open_out(path);
    f.write("CKPT", 4);
    put_u32(f, static_cast<std::uint32_t>(tensors.size()));
    for (const NamedTensor& t : tensors) {
        require(t.name.size() <= 0xffff, "write_checkpoint: name too long");
        put_u16(f, static_cast<std::uint16_t>(t.name.size()));
        f.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put_u32(f, static_cast<std::uint32_t>(t.shape.size()));
        for (int e : t.shape) put_u32(f, static_cast<std::uint32_t>(e));
        require(static_cast<long>(t.values.size()) == shape_numel(t.shape),
                "write_checkpoint: payload size mismatch");
        for (double d : t.values) put_f64(f, d);
    }
    if (!f) fail("write failed", path);
}

std::vector<NamedTensor> read_checkpoint(const std::string& path) {
    auto f = open_in(path);
    expect_magic(f, "CKPT", path);
    const std::uint32_t n = get_u32(f);
    std::vector<NamedTensor> out;
    out.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        NamedTensor t;
        const std::uint16_t len = get_u16(f);
        t.name.resize(len);
        f.read(t.name.data(), len);
        const std::uint32_t rank = get_u32(f);
        t.shape.resize(rank);
        for (std::uint32_t r = 0; r < rank; ++r)
            t.shape[r] = static_cast<int>(get_u32(f));
        const long numel = shape_numel(t.shape);
        t.values.resize(static_cast<std::size_t>(numel));
        for (long j = 0; j < numel; ++j) t.values[static_cast<std::size_t>(j)] = get_f64(f);
        if (!f) fail("truncated CKPT payload", path);
        out.push_back(std::move(t));
    }
    return out;
}

std::string read_text_file(const std::string& path) {
    auto f = open_in(path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
    auto f = open_out(path);
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) fail("write failed", path);
}

std::string file_hash_hex(const std::string& path) {
    const std::string bytes = read_text_file(path);
    const std::uint64_t h = fnv1a(bytes.data(), bytes.size());
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace evfuse::io
