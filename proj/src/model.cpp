#include "rfs/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

namespace rfs {

namespace {

Tensor uniform_tensor(std::vector<int> shape, double half_width, Rng& rng, bool trainable) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    std::vector<double> data(n);
    for (double& v : data) v = (2.0 * rng.uniform() - 1.0) * half_width;
    return Tensor::from(std::move(shape), std::move(data), trainable);
}

// Centered uniform with std = gain / sqrt(m) has half-width gain * sqrt(3/m).
double head_half_width(double gain, int feature_dim) {
    return gain * std::sqrt(3.0 / feature_dim);
}

void write_u32(std::ofstream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ofstream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::ifstream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::ifstream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

void write_entry(std::ofstream& os, const std::string& name, const Tensor& t) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.shape().size()));
    for (int d : t.shape()) write_u32(os, static_cast<std::uint32_t>(d));
    for (double v : t.data()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        write_u64(os, bits);
    }
}

struct RawEntry {
    std::vector<int> shape;
    std::vector<double> data;
};

std::map<std::string, RawEntry> read_entries(std::ifstream& is, int count) {
    std::map<std::string, RawEntry> out;
    for (int e = 0; e < count; ++e) {
        const std::uint32_t name_len = read_u32(is);
        std::string name(name_len, '\0');
        is.read(name.data(), name_len);
        RawEntry entry;
        const std::uint32_t ndim = read_u32(is);
        std::size_t n = 1;
        for (std::uint32_t d = 0; d < ndim; ++d) {
            entry.shape.push_back(static_cast<int>(read_u32(is)));
            n *= static_cast<std::size_t>(entry.shape.back());
        }
        entry.data.resize(n);
        for (double& v : entry.data) {
            const std::uint64_t bits = read_u64(is);
            std::memcpy(&v, &bits, 8);
        }
        out.emplace(std::move(name), std::move(entry));
    }
    return out;
}

constexpr std::uint32_t kCkptMagic = 0x43534652;  // "RFSC"

}  // namespace

FeatureExtractor FeatureExtractor::init(int input_dim, int hidden_dim, int feature_dim,
                                        Rng& rng, bool trainable) {
    FeatureExtractor f;
    f.input_dim = input_dim;
    f.hidden_dim = hidden_dim;
    f.feature_dim = feature_dim;
    const double s1 = 1.0 / std::sqrt(static_cast<double>(input_dim));
    const double s2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    f.w1 = uniform_tensor({input_dim, hidden_dim}, s1, rng, trainable);
    f.b1 = Tensor::zeros({hidden_dim}, trainable);
    f.w2 = uniform_tensor({hidden_dim, hidden_dim}, s2, rng, trainable);
    f.b2 = Tensor::zeros({hidden_dim}, trainable);
    f.w3 = uniform_tensor({hidden_dim, feature_dim}, s2, rng, trainable);
    f.b3 = Tensor::zeros({feature_dim}, trainable);
    return f;
}

Tensor FeatureExtractor::forward(const Tensor& x) const {
    if (x.cols() != input_dim) throw DimensionError("extractor: input width mismatch");
    Tensor h1 = relu(add_rowvec(matmul(x, w1), b1));
    Tensor h2 = relu(add_rowvec(matmul(h1, w2), b2));
    return add_rowvec(matmul(h2, w3), b3);
}

std::vector<Tensor> FeatureExtractor::parameters() const { return {w1, b1, w2, b2, w3, b3}; }

FeatureExtractor FeatureExtractor::frozen_copy() const {
    FeatureExtractor f;
    f.input_dim = input_dim;
    f.hidden_dim = hidden_dim;
    f.feature_dim = feature_dim;
    f.w1 = w1.detach_copy();
    f.b1 = b1.detach_copy();
    f.w2 = w2.detach_copy();
    f.b2 = b2.detach_copy();
    f.w3 = w3.detach_copy();
    f.b3 = b3.detach_copy();
    return f;
}

DualHead DualHead::init(int feature_dim, bool use_bias, double init_gain) {
    DualHead h;
    h.feature_dim = feature_dim;
    h.use_bias = use_bias;
    h.init_gain = init_gain;
    h.unified_w = Tensor::zeros({feature_dim, 0}, true);
    if (use_bias) h.unified_b = Tensor::zeros({0}, true);
    return h;
}

Tensor DualHead::unified_logits(const Tensor& features) const {
    Tensor logits = matmul(features, unified_w);
    if (use_bias) logits = add_rowvec(logits, unified_b);
    return logits;
}

Tensor DualHead::aug_logits(const Tensor& features) const {
    if (current_task_classes == 0) throw ProtocolError("aug head not initialized for a task");
    Tensor logits = matmul(features, aug_w);
    if (use_bias) logits = add_rowvec(logits, aug_b);
    return logits;
}

void DualHead::expand_unified(int new_class_count, Rng& rng) {
    if (new_class_count < 0) throw ArgumentError("expand_unified: negative class count");
    if (new_class_count == 0) return;
    const int old = seen_classes;
    const int wider = old + new_class_count;
    const double hw = head_half_width(init_gain, feature_dim);
    std::vector<double> data(static_cast<std::size_t>(feature_dim) * wider, 0.0);
    // New columns appended on the right; draw order is row-major over the
    // fresh block so expansion consumes m * new_class_count uniforms.
    for (int r = 0; r < feature_dim; ++r) {
        const double* src = old > 0 ? unified_w.data().data() + static_cast<std::size_t>(r) * old
                                    : nullptr;
        for (int c = 0; c < old; ++c) data[static_cast<std::size_t>(r) * wider + c] = src[c];
        for (int c = old; c < wider; ++c)
            data[static_cast<std::size_t>(r) * wider + c] = (2.0 * rng.uniform() - 1.0) * hw;
    }
    unified_w = Tensor::from({feature_dim, wider}, std::move(data), true);
    if (use_bias) {
        std::vector<double> bias(wider, 0.0);
        for (int c = 0; c < old; ++c) bias[c] = unified_b.data()[c];
        unified_b = Tensor::from({wider}, std::move(bias), true);
    }
    seen_classes = wider;
}

void DualHead::reset_aug(int task_class_count, Rng& rng) {
    if (task_class_count < 1) throw ArgumentError("reset_aug: need at least one class");
    current_task_classes = task_class_count;
    const double hw = head_half_width(init_gain, feature_dim);
    aug_w = uniform_tensor({feature_dim, 4 * task_class_count}, hw, rng, true);
    if (use_bias) aug_b = Tensor::zeros({4 * task_class_count}, true);
}

std::vector<Tensor> DualHead::parameters() const {
    std::vector<Tensor> out;
    if (unified_w.defined() && unified_w.size() > 0) out.push_back(unified_w);
    if (use_bias && unified_b.defined() && unified_b.size() > 0) out.push_back(unified_b);
    if (aug_w.defined()) out.push_back(aug_w);
    if (use_bias && aug_b.defined()) out.push_back(aug_b);
    return out;
}

std::vector<Tensor> Model::parameters() const {
    std::vector<Tensor> out = extractor.parameters();
    for (const Tensor& t : head.parameters()) out.push_back(t);
    return out;
}

Tensor Model::batch_from_images(const std::vector<const Image*>& images) {
    if (images.empty()) throw ArgumentError("batch_from_images: empty batch");
    const int pixels = static_cast<int>(images.front()->pixels.size());
    std::vector<double> data;
    data.reserve(images.size() * static_cast<std::size_t>(pixels));
    for (const Image* img : images) {
        if (static_cast<int>(img->pixels.size()) != pixels)
            throw DimensionError("batch_from_images: inconsistent image sizes");
        data.insert(data.end(), img->pixels.begin(), img->pixels.end());
    }
    return Tensor::from({static_cast<int>(images.size()), pixels}, std::move(data), false);
}

Tensor ModelSnapshot::unified_logits(const Tensor& features) const {
    Tensor logits = matmul(features, unified_w);
    if (use_bias) logits = add_rowvec(logits, unified_b);
    return logits;
}

ModelSnapshot snapshot(const Model& model) {
    ModelSnapshot s;
    s.extractor = model.extractor.frozen_copy();
    s.unified_w = model.head.unified_w.detach_copy();
    s.use_bias = model.head.use_bias;
    if (s.use_bias) s.unified_b = model.head.unified_b.detach_copy();
    s.seen_classes = model.head.seen_classes;
    return s;
}

std::uint64_t parameter_hash(const std::vector<Tensor>& params) {
    std::uint64_t h = 1469598103934665603ULL;
    for (const Tensor& t : params)
        for (double v : t.data()) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, 8);
            for (int i = 0; i < 8; ++i) {
                h ^= (bits >> (8 * i)) & 0xFF;
                h *= 1099511628211ULL;
            }
        }
    return h;
}

void save_checkpoint(const std::string& path, const Model& model, const CheckpointMeta& meta) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("save_checkpoint: cannot open " + path);
    write_u32(os, kCkptMagic);
    write_u32(os, 1);  // version
    write_u32(os, static_cast<std::uint32_t>(meta.task_index));
    write_u32(os, static_cast<std::uint32_t>(meta.seen_classes));
    write_u64(os, meta.config_hash);
    write_u32(os, static_cast<std::uint32_t>(model.extractor.input_dim));
    write_u32(os, static_cast<std::uint32_t>(model.extractor.hidden_dim));
    write_u32(os, static_cast<std::uint32_t>(model.extractor.feature_dim));
    write_u32(os, model.head.use_bias ? 1 : 0);
    write_u32(os, static_cast<std::uint32_t>(model.head.current_task_classes));

    std::vector<std::pair<std::string, const Tensor*>> entries = {
        {"extractor.w1", &model.extractor.w1}, {"extractor.b1", &model.extractor.b1},
        {"extractor.w2", &model.extractor.w2}, {"extractor.b2", &model.extractor.b2},
        {"extractor.w3", &model.extractor.w3}, {"extractor.b3", &model.extractor.b3},
        {"head.unified_w", &model.head.unified_w}};
    if (model.head.use_bias) entries.emplace_back("head.unified_b", &model.head.unified_b);
    if (model.head.current_task_classes > 0) {
        entries.emplace_back("head.aug_w", &model.head.aug_w);
        if (model.head.use_bias) entries.emplace_back("head.aug_b", &model.head.aug_b);
    }
    write_u32(os, static_cast<std::uint32_t>(entries.size()));
    for (const auto& [name, tensor] : entries) write_entry(os, name, *tensor);
    if (!os) throw Error("save_checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("load_checkpoint: cannot open " + path);
    if (read_u32(is) != kCkptMagic) throw Error("load_checkpoint: bad magic in " + path);
    if (read_u32(is) != 1) throw Error("load_checkpoint: unsupported version");

    LoadedCheckpoint out;
    out.meta.task_index = static_cast<int>(read_u32(is));
    out.meta.seen_classes = static_cast<int>(read_u32(is));
    out.meta.config_hash = read_u64(is);
    const int input_dim = static_cast<int>(read_u32(is));
    const int hidden_dim = static_cast<int>(read_u32(is));
    const int feature_dim = static_cast<int>(read_u32(is));
    const bool use_bias = read_u32(is) != 0;
    const int task_classes = static_cast<int>(read_u32(is));
    const int entry_count = static_cast<int>(read_u32(is));
    auto entries = read_entries(is, entry_count);
    if (!is) throw Error("load_checkpoint: truncated file " + path);

    auto take = [&](const std::string& name) {
        auto it = entries.find(name);
        if (it == entries.end()) throw Error("load_checkpoint: missing entry " + name);
        return Tensor::from(it->second.shape, it->second.data, true);
    };

    Model& m = out.model;
    m.extractor.input_dim = input_dim;
    m.extractor.hidden_dim = hidden_dim;
    m.extractor.feature_dim = feature_dim;
    m.extractor.w1 = take("extractor.w1");
    m.extractor.b1 = take("extractor.b1");
    m.extractor.w2 = take("extractor.w2");
    m.extractor.b2 = take("extractor.b2");
    m.extractor.w3 = take("extractor.w3");
    m.extractor.b3 = take("extractor.b3");
    m.head.feature_dim = feature_dim;
    m.head.use_bias = use_bias;
    m.head.unified_w = take("head.unified_w");
    m.head.seen_classes = out.meta.seen_classes;
    m.head.current_task_classes = task_classes;
    if (use_bias) m.head.unified_b = take("head.unified_b");
    if (task_classes > 0) {
        m.head.aug_w = take("head.aug_w");
        if (use_bias) m.head.aug_b = take("head.aug_b");
    }
    return out;
}

}  // namespace rfs
