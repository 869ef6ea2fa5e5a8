#include "rfs/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace rfs {

namespace {

// Each class is a full-field oriented grating. Bar angles avoid multiples of
// 45 degrees so no rotated view is ambiguous with an upright template; the
// class-specific phase offsets avoid the
// values that would make a template symmetric under a 180-degree turn.
constexpr double kAnglesDeg[] = {10.0, 32.0, 54.0, 76.0};
constexpr double kFrequencies[] = {1.0, 2.0, 3.0};
constexpr double kPhaseOffsets[] = {0.5, 1.25};
constexpr double kPi = 3.14159265358979323846;

struct ClassParams {
    double angle_rad;
    double frequency;
    double phase_offset;
};

ClassParams class_params(int class_id) {
    const int na = 4, nf = 3;
    const int a = class_id % na;
    const int f = (class_id / na) % nf;
    const int ph = class_id / (na * nf);
    return {kAnglesDeg[a] * kPi / 180.0, kFrequencies[f], kPhaseOffsets[ph]};
}

Image class_template(int class_id, int side) {
    const ClassParams cp = class_params(class_id);
    Image img;
    img.side = side;
    img.pixels.resize(static_cast<std::size_t>(side) * side);
    const double half = (side - 1) / 2.0;
    const double inv = 2.0 / side;
    const double ca = std::cos(cp.angle_rad), sa = std::sin(cp.angle_rad);
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            const double x = (c - half) * inv;
            const double y = (half - r) * inv;
            const double u = x * ca + y * sa;
            img.pixels[static_cast<std::size_t>(r) * side + c] =
                0.5 + 0.45 * std::sin(kPi * cp.frequency * u + cp.phase_offset);
        }
    }
    return img;
}

Image noisy_sample(const Image& tmpl, double noise_std, Rng& rng) {
    Image img = tmpl;
    if (noise_std > 0.0) {
        for (double& p : img.pixels)
            p = std::clamp(p + noise_std * rng.normal(), 0.0, 1.0);
    }
    return img;
}

void write_u32(std::ofstream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::ifstream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

void write_f64(std::ofstream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

double read_f64(std::ifstream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void write_set(std::ofstream& os, const LabeledSet& set) {
    for (const Image& img : set.images)
        for (double p : img.pixels) write_f64(os, p);
    for (int label : set.labels) write_u32(os, static_cast<std::uint32_t>(label));
}

void read_set(std::ifstream& is, LabeledSet& set, int count, int side) {
    set.images.resize(count);
    set.labels.resize(count);
    for (Image& img : set.images) {
        img.side = side;
        img.pixels.resize(static_cast<std::size_t>(side) * side);
        for (double& p : img.pixels) p = read_f64(is);
    }
    for (int& label : set.labels) label = static_cast<int>(read_u32(is));
}

constexpr std::uint32_t kMagic = 0x44534652;  // "RFSD"
constexpr std::uint32_t kVersion = 1;

}  // namespace

int dataset_capacity() { return 4 * 3 * 2; }

Dataset generate_dataset(int class_count, int per_class_train, int per_class_test,
                         int side, std::uint64_t seed, double noise_std) {
    if (class_count < 2) throw ArgumentError("generate_dataset: need at least 2 classes");
    if (per_class_train < 1 || per_class_test < 1)
        throw ArgumentError("generate_dataset: per-class counts must be >= 1");
    if (side < 4) throw ArgumentError("generate_dataset: side must be >= 4");
    if (noise_std < 0.0) throw ArgumentError("generate_dataset: noise std must be >= 0");
    if (class_count > dataset_capacity())
        throw CapacityError("generate_dataset: class count " + std::to_string(class_count) +
                            " exceeds " + std::to_string(dataset_capacity()) +
                            " distinct parameter combinations");

    Dataset ds;
    ds.class_count = class_count;
    ds.side = side;
    ds.train.split = Split::train;
    ds.test.split = Split::test;

    Rng rng(seed);
    for (int k = 0; k < class_count; ++k) {
        const Image tmpl = class_template(k, side);
        for (int i = 0; i < per_class_train; ++i) {
            ds.train.images.push_back(noisy_sample(tmpl, noise_std, rng));
            ds.train.labels.push_back(k);
        }
        for (int i = 0; i < per_class_test; ++i) {
            ds.test.images.push_back(noisy_sample(tmpl, noise_std, rng));
            ds.test.labels.push_back(k);
        }
    }
    return ds;
}

Image rotate90(const Image& img, int quarter_turns) {
    if (quarter_turns < 0 || quarter_turns > 3)
        throw ArgumentError("rotate90: quarter_turns must be in {0, 1, 2, 3}");
    const int n = img.side;
    if (static_cast<int>(img.pixels.size()) != n * n)
        throw DimensionError("rotate90: image is not square");
    Image out = img;
    for (int t = 0; t < quarter_turns; ++t) {
        Image next;
        next.side = n;
        next.pixels.resize(out.pixels.size());
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c)
                next.pixels[static_cast<std::size_t>(r) * n + c] =
                    out.pixels[static_cast<std::size_t>(c) * n + (n - 1 - r)];
        out = std::move(next);
    }
    return out;
}

int TaskStream::unified_index(int class_id) const {
    for (std::size_t i = 0; i < class_order.size(); ++i)
        if (class_order[i] == class_id) return static_cast<int>(i);
    throw LookupError("unified_index: unknown class id " + std::to_string(class_id));
}

TaskStream split_tasks(int class_count, int base_count, int per_phase, int phase_count,
                       std::uint64_t order_seed) {
    if (base_count < 1 || per_phase < 0 || phase_count < 0)
        throw ProtocolError("split_tasks: counts must be non-negative with B >= 1");
    if (base_count + per_phase * phase_count != class_count)
        throw ProtocolError("split_tasks: B + C*T = " +
                            std::to_string(base_count + per_phase * phase_count) +
                            " but class count is " + std::to_string(class_count));

    TaskStream ts;
    ts.base_count = base_count;
    ts.per_phase = per_phase;
    ts.phase_count = phase_count;
    ts.class_order.resize(class_count);
    for (int i = 0; i < class_count; ++i) ts.class_order[i] = i;
    Rng rng(order_seed);
    rng.shuffle(ts.class_order);

    int cursor = 0;
    ts.tasks.emplace_back(ts.class_order.begin(), ts.class_order.begin() + base_count);
    cursor = base_count;
    for (int t = 0; t < phase_count; ++t) {
        ts.tasks.emplace_back(ts.class_order.begin() + cursor,
                              ts.class_order.begin() + cursor + per_phase);
        cursor += per_phase;
    }
    return ts;
}

void export_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("export_dataset: cannot open " + path);
    write_u32(os, kMagic);
    write_u32(os, kVersion);
    write_u32(os, static_cast<std::uint32_t>(ds.side));
    write_u32(os, static_cast<std::uint32_t>(ds.class_count));
    write_u32(os, static_cast<std::uint32_t>(ds.train.images.size()));
    write_u32(os, static_cast<std::uint32_t>(ds.test.images.size()));
    write_set(os, ds.train);
    write_set(os, ds.test);
    if (!os) throw Error("export_dataset: write failed for " + path);
}

Dataset import_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("import_dataset: cannot open " + path);
    if (read_u32(is) != kMagic) throw Error("import_dataset: bad magic in " + path);
    if (read_u32(is) != kVersion) throw Error("import_dataset: unsupported version");
    Dataset ds;
    ds.side = static_cast<int>(read_u32(is));
    ds.class_count = static_cast<int>(read_u32(is));
    const int train_count = static_cast<int>(read_u32(is));
    const int test_count = static_cast<int>(read_u32(is));
    ds.train.split = Split::train;
    ds.test.split = Split::test;
    read_set(is, ds.train, train_count, ds.side);
    read_set(is, ds.test, test_count, ds.side);
    if (!is) throw Error("import_dataset: truncated file " + path);
    return ds;
}

}  // namespace rfs
