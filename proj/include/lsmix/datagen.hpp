#pragma once

#include "lsmix/core.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace lsmix {

/// Dense design matrix with labels. Binary mode stores labels in {-1,+1} with k = 2;
/// multiclass mode stores labels in [0,k). `low_var_dims` holds 0-based column indices.
struct Dataset {
    Matrix features;
    std::vector<int> labels;
    int k = 2;
    std::vector<std::size_t> low_var_dims;
    std::string name;

    std::size_t n() const { return static_cast<std::size_t>(features.rows()); }
    std::size_t d() const { return static_cast<std::size_t>(features.cols()); }

    bool binary() const {
        if (k != 2) return false;
        return std::all_of(labels.begin(), labels.end(), [](int y) { return y == -1 || y == 1; });
    }

    /// Complement of low_var_dims.
    std::vector<std::size_t> high_var_dims() const {
        std::vector<std::size_t> out;
        std::set<std::size_t> low(low_var_dims.begin(), low_var_dims.end());
        for (std::size_t j = 0; j < d(); ++j)
            if (!low.count(j)) out.push_back(j);
        return out;
    }

    void validate() const {
        require(n() >= 1 && d() >= 1, "dataset must have n >= 1 and d >= 1");
        require(labels.size() == n(), "label count does not match feature rows");
        require(k >= 2, "dataset needs k >= 2");
        const bool pm = binary();
        for (int y : labels) {
            if (pm) continue;
            require(y >= 0 && y < k, "label " + std::to_string(y) + " outside [0," + std::to_string(k) + ")");
        }
        for (auto j : low_var_dims) require(j < d(), "low_var_dims index outside [0,d)");
    }
};

struct SyntheticConfig {
    std::size_t d = 10;
    std::size_t n = 5000;
    double gamma = 0.1;
    double high_lo = 1.0;
    double high_hi = 100.0;
    /// Width of centered uniform noise added to the low-variance block (0 = exactly constant).
    double low_noise_width = 0.0;
    std::uint64_t seed = 0;

    void validate() const {
        require(d >= 2, "synthetic config needs d >= 2");
        require(n >= 1, "synthetic config needs n >= 1");
        require(gamma > 0.0, "synthetic config needs gamma > 0");
        require(high_lo > 0.0 && high_lo < high_hi, "synthetic config needs 0 < lo < hi");
        require(low_noise_width >= 0.0, "noise width must be non-negative");
    }
};

/// Images stored planar (all of channel 0, then channel 1, ...), row-major inside a plane.
struct ImageDataset {
    std::vector<std::uint8_t> pixels;
    std::vector<int> labels;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 1;
    int k = 10;

    std::size_t n() const { return labels.size(); }
    std::size_t image_size() const { return height * width * channels; }
    std::size_t plane_size() const { return height * width; }

    const std::uint8_t* image(std::size_t i) const { return pixels.data() + i * image_size(); }
    std::uint8_t* image(std::size_t i) { return pixels.data() + i * image_size(); }

    void validate() const {
        require(pixels.size() == n() * image_size(), "pixel buffer length does not equal n*H*W*C");
        for (int y : labels) require(y >= 0 && y < k, "image label outside [0,k)");
    }
};

namespace detail {

inline int draw_sign(Rng& rng) { return uniform01(rng) < 0.5 ? -1 : 1; }

/// Uniform on the interval spanned by lo*y and hi*y, whichever order they fall in.
inline double signed_uniform(Rng& rng, double lo, double hi, int y) {
    const double a = lo * y, b = hi * y;
    return uniform(rng, std::min(a, b), std::max(a, b));
}

inline double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace detail

/// First floor(d/2) coordinates are gamma*y, the rest i.i.d. uniform between lo*y and hi*y.
inline Dataset sample_lowvar_highvar(const SyntheticConfig& cfg) {
    cfg.validate();
    Rng rng = make_rng({cfg.seed, 0x10a5ULL});
    // Separate stream, so changing the noise width leaves labels and high-variance dims untouched.
    Rng noise = make_rng({cfg.seed, 0x401eULL});
    const std::size_t half = cfg.d / 2;
    Dataset ds;
    ds.k = 2;
    ds.features.resize(static_cast<Eigen::Index>(cfg.n), static_cast<Eigen::Index>(cfg.d));
    ds.labels.resize(cfg.n);
    for (std::size_t i = 0; i < cfg.n; ++i) {
        const int y = detail::draw_sign(rng);
        ds.labels[i] = y;
        for (std::size_t j = 0; j < half; ++j) {
            double v = cfg.gamma * y;
            if (cfg.low_noise_width > 0.0) v += uniform(noise, -0.5, 0.5) * cfg.low_noise_width;
            ds.features(i, j) = v;
        }
        for (std::size_t j = half; j < cfg.d; ++j)
            ds.features(i, j) = detail::signed_uniform(rng, cfg.high_lo, cfg.high_hi, y);
    }
    for (std::size_t j = 0; j < half; ++j) ds.low_var_dims.push_back(j);
    ds.name = "lowvar_highvar(d=" + std::to_string(cfg.d) + ",gamma=" + fmt17(cfg.gamma) +
              ",seed=" + std::to_string(cfg.seed) + ")";
    return ds;
}

/// 2-D data: x1 uniform between y and 10y, x2 fixed at 0.1y.
inline Dataset sample_boundary_2d(std::size_t n, std::uint64_t seed) {
    require(n >= 1, "boundary dataset needs n >= 1");
    Rng rng = make_rng({seed, 0xb02dULL});
    Dataset ds;
    ds.k = 2;
    ds.features.resize(static_cast<Eigen::Index>(n), 2);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const int y = detail::draw_sign(rng);
        ds.labels[i] = y;
        ds.features(i, 0) = detail::signed_uniform(rng, 1.0, 10.0, y);
        ds.features(i, 1) = 0.1 * y;
    }
    ds.low_var_dims = {1};
    ds.name = "boundary2d(seed=" + std::to_string(seed) + ")";
    return ds;
}

/// Replaces column 0 with gamma*y. Only meaningful for binary data.
inline Dataset inject_spurious_dim(const Dataset& ds, double gamma) {
    if (!ds.binary()) throw ModeError("inject_spurious_dim requires binary labels in {-1,+1}");
    Dataset out = ds;
    for (std::size_t i = 0; i < out.n(); ++i) out.features(i, 0) = gamma * out.labels[i];
    out.low_var_dims = {0};
    out.name = ds.name + "+spurious(gamma=" + fmt17(gamma) + ")";
    return out;
}

using Rgb = std::array<std::uint8_t, 3>;

/// k distinct colors with every channel in [1, max_intensity], deterministic in the seed.
inline std::vector<Rgb> make_palette(int k, int max_intensity, std::uint64_t seed) {
    require(max_intensity >= 1 && max_intensity <= 255, "max_intensity must be in [1,255]");
    const long long capacity = static_cast<long long>(max_intensity) * max_intensity * max_intensity;
    if (k > capacity)
        throw ConfigError("palette exhausted: " + std::to_string(k) + " classes but only " +
                          std::to_string(capacity) + " colors with channels <= " +
                          std::to_string(max_intensity));
    Rng rng = make_rng({seed, 0xc010ULL});
    std::vector<Rgb> palette;
    std::set<Rgb> seen;
    while (static_cast<int>(palette.size()) < k) {
        Rgb c;
        for (auto& ch : c) ch = static_cast<std::uint8_t>(1 + uniform_index(rng, static_cast<std::uint64_t>(max_intensity)));
        if (seen.insert(c).second) palette.push_back(c);
    }
    return palette;
}

/// Grayscale -> RGB. Background (value 0) takes the class color; with `permute` the class->color
/// map is shifted cyclically by one so that no class keeps its color.
inline ImageDataset colorize_backgrounds(const ImageDataset& ds, int max_intensity, bool permute,
                                         std::uint64_t seed) {
    require(ds.channels == 1, "colorize_backgrounds expects grayscale input (C=1)");
    ds.validate();
    if (permute) require(ds.k >= 2, "a color permutation without fixed points needs k >= 2");
    const auto palette = make_palette(ds.k, max_intensity, seed);
    ImageDataset out;
    out.height = ds.height;
    out.width = ds.width;
    out.channels = 3;
    out.k = ds.k;
    out.labels = ds.labels;
    out.pixels.resize(ds.n() * out.image_size());
    const std::size_t plane = ds.plane_size();
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const int c = ds.labels[i];
        const Rgb& color = palette[static_cast<std::size_t>(permute ? (c + 1) % ds.k : c)];
        const std::uint8_t* src = ds.image(i);
        std::uint8_t* dst = out.image(i);
        for (std::size_t p = 0; p < plane; ++p) {
            for (std::size_t ch = 0; ch < 3; ++ch)
                dst[ch * plane + p] = src[p] == 0 ? color[ch] : src[p];
        }
    }
    return out;
}

namespace detail {

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file: " + path);
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot write file: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ParseError("write failed: " + path);
}

inline std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off) {
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
           (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
    b.push_back(static_cast<std::uint8_t>(v >> 24));
    b.push_back(static_cast<std::uint8_t>(v >> 16));
    b.push_back(static_cast<std::uint8_t>(v >> 8));
    b.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace detail

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxHeader {
    std::uint32_t magic = 0;
    std::uint32_t count = 0;
    std::uint32_t rows = 0;
    std::uint32_t cols = 0;
};

/// Parses the header of an IDX buffer; `what` names the file in error messages.
inline IdxHeader parse_idx_header(const std::vector<std::uint8_t>& b, bool images, const std::string& what) {
    IdxHeader h;
    const std::size_t header_len = images ? 16 : 8;
    if (b.size() < 4) throw ParseError(what + ": truncated (magic)");
    h.magic = detail::be32(b, 0);
    const std::uint32_t want = images ? kIdxImagesMagic : kIdxLabelsMagic;
    if (h.magic != want)
        throw ParseError(what + ": bad magic " + std::to_string(h.magic) + " (expected " + std::to_string(want) + ")");
    if (b.size() < 8) throw ParseError(what + ": truncated (count)");
    h.count = detail::be32(b, 4);
    if (images) {
        if (b.size() < 12) throw ParseError(what + ": truncated (rows)");
        h.rows = detail::be32(b, 8);
        if (b.size() < header_len) throw ParseError(what + ": truncated (cols)");
        h.cols = detail::be32(b, 12);
    }
    const std::size_t body = images ? std::size_t{h.count} * h.rows * h.cols : std::size_t{h.count};
    if (b.size() < header_len + body)
        throw ParseError(what + ": truncated (" + std::string(images ? "pixels" : "labels") + ": expected " +
                         std::to_string(body) + " bytes, found " + std::to_string(b.size() - header_len) + ")");
    if (b.size() > header_len + body)
        throw ParseError(what + ": trailing bytes after " + std::string(images ? "pixels" : "labels"));
    return h;
}

inline ImageDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
    const auto ib = detail::read_file(images_path);
    const auto lb = detail::read_file(labels_path);
    const auto ih = parse_idx_header(ib, true, "images file " + images_path);
    const auto lh = parse_idx_header(lb, false, "labels file " + labels_path);
    if (ih.count != lh.count)
        throw ParseError("count mismatch: images file has " + std::to_string(ih.count) + " items, labels file has " +
                         std::to_string(lh.count));
    ImageDataset ds;
    ds.height = ih.rows;
    ds.width = ih.cols;
    ds.channels = 1;
    ds.k = 10;
    ds.pixels.assign(ib.begin() + 16, ib.end());
    ds.labels.resize(lh.count);
    for (std::size_t i = 0; i < lh.count; ++i) {
        const int y = lb[8 + i];
        if (y >= ds.k) throw ParseError("labels file " + labels_path + ": label " + std::to_string(y) + " at index " +
                                        std::to_string(i) + " outside [0,10)");
        ds.labels[i] = y;
    }
    return ds;
}

inline void write_mnist_idx(const ImageDataset& ds, const std::string& images_path, const std::string& labels_path) {
    ds.validate();
    require(ds.channels == 1, "IDX image files hold single-channel images");
    std::vector<std::uint8_t> ib, lb;
    detail::put_be32(ib, kIdxImagesMagic);
    detail::put_be32(ib, static_cast<std::uint32_t>(ds.n()));
    detail::put_be32(ib, static_cast<std::uint32_t>(ds.height));
    detail::put_be32(ib, static_cast<std::uint32_t>(ds.width));
    ib.insert(ib.end(), ds.pixels.begin(), ds.pixels.end());
    detail::put_be32(lb, kIdxLabelsMagic);
    detail::put_be32(lb, static_cast<std::uint32_t>(ds.n()));
    for (int y : ds.labels) lb.push_back(static_cast<std::uint8_t>(y));
    detail::write_file(images_path, ib);
    detail::write_file(labels_path, lb);
}

inline constexpr std::size_t kCifarRecord = 3073;
inline constexpr std::size_t kCifarSide = 32;

/// Concatenates CIFAR-10 binary batches: each record is 1 label byte + 1024 R + 1024 G + 1024 B.
inline ImageDataset load_cifar10_binary(const std::vector<std::string>& paths) {
    ImageDataset ds;
    ds.height = ds.width = kCifarSide;
    ds.channels = 3;
    ds.k = 10;
    for (const auto& path : paths) {
        const auto b = detail::read_file(path);
        if (b.empty()) throw ParseError(path + ": empty CIFAR batch");
        if (b.size() % kCifarRecord != 0)
            throw ParseError(path + ": size " + std::to_string(b.size()) + " is not a multiple of the " +
                             std::to_string(kCifarRecord) + "-byte record");
        const std::size_t records = b.size() / kCifarRecord;
        for (std::size_t r = 0; r < records; ++r) {
            const std::size_t off = r * kCifarRecord;
            const int y = b[off];
            if (y >= ds.k)
                throw ParseError(path + ": label " + std::to_string(y) + " in record " + std::to_string(r) +
                                 " outside [0,10)");
            ds.labels.push_back(y);
            ds.pixels.insert(ds.pixels.end(), b.begin() + static_cast<std::ptrdiff_t>(off + 1),
                             b.begin() + static_cast<std::ptrdiff_t>(off + kCifarRecord));
        }
    }
    return ds;
}

inline void write_cifar10_binary(const ImageDataset& ds, const std::string& path) {
    ds.validate();
    require(ds.height == kCifarSide && ds.width == kCifarSide && ds.channels == 3,
            "CIFAR-10 records are 32x32x3");
    std::vector<std::uint8_t> b;
    b.reserve(ds.n() * kCifarRecord);
    for (std::size_t i = 0; i < ds.n(); ++i) {
        b.push_back(static_cast<std::uint8_t>(ds.labels[i]));
        b.insert(b.end(), ds.image(i), ds.image(i) + ds.image_size());
    }
    detail::write_file(path, b);
}

/// Keeps two classes, relabels them -1/+1 and upcasts pixels to doubles.
inline Dataset select_binary_classes(const ImageDataset& ds, int neg_class, int pos_class) {
    require(neg_class != pos_class, "negative and positive class must differ");
    std::size_t count_neg = 0, count_pos = 0;
    for (int y : ds.labels) {
        count_neg += (y == neg_class);
        count_pos += (y == pos_class);
    }
    if (count_neg == 0) throw ConfigError("class " + std::to_string(neg_class) + " not present in dataset");
    if (count_pos == 0) throw ConfigError("class " + std::to_string(pos_class) + " not present in dataset");
    Dataset out;
    out.k = 2;
    out.features.resize(static_cast<Eigen::Index>(count_neg + count_pos), static_cast<Eigen::Index>(ds.image_size()));
    std::size_t row = 0;
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const int y = ds.labels[i];
        if (y != neg_class && y != pos_class) continue;
        const std::uint8_t* px = ds.image(i);
        for (std::size_t j = 0; j < ds.image_size(); ++j) out.features(row, j) = px[j];
        out.labels.push_back(y == pos_class ? 1 : -1);
        ++row;
    }
    out.name = "binary(" + std::to_string(neg_class) + " vs " + std::to_string(pos_class) + ")";
    return out;
}

/// Multiclass view of an image set with pixels upcast to doubles.
inline Dataset to_multiclass(const ImageDataset& ds) {
    ds.validate();
    Dataset out;
    out.k = ds.k;
    out.features.resize(static_cast<Eigen::Index>(ds.n()), static_cast<Eigen::Index>(ds.image_size()));
    for (std::size_t i = 0; i < ds.n(); ++i) {
        const std::uint8_t* px = ds.image(i);
        for (std::size_t j = 0; j < ds.image_size(); ++j) out.features(i, j) = px[j];
    }
    out.labels = ds.labels;
    out.name = "images";
    return out;
}

/// Feature j belongs to channel j / plane_size.
struct ChannelLayout {
    std::size_t channels = 1;
    std::size_t plane_size = 1;

    static ChannelLayout planar(std::size_t channels, std::size_t plane) { return {channels, plane}; }
    static ChannelLayout per_feature(std::size_t d) { return {d, 1}; }
};

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> stddev;
    std::vector<bool> zero_variance;
};

struct StandardizedPair {
    Dataset train;
    Dataset test;
    ChannelStats stats;
};

/// Per-channel z-scoring with statistics taken from `train` only.
inline StandardizedPair standardize_channels(const Dataset& train, const Dataset& test, const ChannelLayout& layout) {
    require(layout.channels * layout.plane_size == train.d(), "channel layout does not cover the training features");
    require(train.d() == test.d(), "train and test feature dimensions differ");
    StandardizedPair out{train, test, {}};
    auto& st = out.stats;
    st.mean.assign(layout.channels, 0.0);
    st.stddev.assign(layout.channels, 1.0);
    st.zero_variance.assign(layout.channels, false);
    const double count = static_cast<double>(train.n() * layout.plane_size);
    for (std::size_t c = 0; c < layout.channels; ++c) {
        const auto block = train.features.middleCols(static_cast<Eigen::Index>(c * layout.plane_size),
                                                     static_cast<Eigen::Index>(layout.plane_size));
        const double mean = block.sum() / count;
        const double var = (block.array() - mean).square().sum() / count;
        st.mean[c] = mean;
        if (var > 0.0) {
            st.stddev[c] = std::sqrt(var);
        } else {
            st.stddev[c] = 1.0;
            st.zero_variance[c] = true;
        }
        for (Dataset* ds : {&out.train, &out.test}) {
            auto cols = ds->features.middleCols(static_cast<Eigen::Index>(c * layout.plane_size),
                                                static_cast<Eigen::Index>(layout.plane_size));
            cols.array() = (cols.array() - mean) / st.stddev[c];
        }
    }
    return out;
}

/// CSV with header x0..x{d-1},label; values with 17 significant digits.
inline void write_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ParseError("cannot write file: " + path);
    for (std::size_t j = 0; j < ds.d(); ++j) out << 'x' << j << ',';
    out << "label\n";
    for (std::size_t i = 0; i < ds.n(); ++i) {
        for (std::size_t j = 0; j < ds.d(); ++j) out << fmt17(ds.features(i, j)) << ',';
        out << ds.labels[i] << '\n';
    }
    if (!out) throw ParseError("write failed: " + path);
}

inline Dataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty CSV");
    const auto header = split(trim(line), ',');
    if (header.size() < 2 || header.back() != "label") throw ParseError(path + ": header must end with 'label'");
    const std::size_t d = header.size() - 1;
    std::vector<double> values;
    std::vector<int> labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty()) continue;
        const auto cells = split(t, ',');
        if (cells.size() != d + 1)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(d + 1) + " columns");
        for (std::size_t j = 0; j < d; ++j) values.push_back(parse_double(cells[j]));
        labels.push_back(static_cast<int>(parse_double(cells[d])));
    }
    if (labels.empty()) throw ParseError(path + ": no data rows");
    Dataset ds;
    ds.features = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(d));
    ds.labels = labels;
    const bool pm = std::all_of(labels.begin(), labels.end(), [](int y) { return y == -1 || y == 1; });
    ds.k = pm ? 2 : *std::max_element(labels.begin(), labels.end()) + 1;
    ds.name = path;
    ds.validate();
    return ds;
}

/// Synthetic 32x32x3 image classes: a smooth per-class template with random per-image gain,
/// a per-image brightness shift, and pixel noise. Used where CIFAR-10 binaries are absent.
struct StandinConfig {
    std::size_t per_class = 1000;
    int classes = 10;
    double template_amplitude = 24.0;
    double gain_spread = 0.5;
    double brightness_sd = 30.0;
    double noise_sd = 40.0;
    std::uint64_t seed = 0;
};

inline ImageDataset make_cifar_standin(const StandinConfig& cfg) {
    require(cfg.classes >= 2 && cfg.per_class >= 1, "stand-in needs >= 2 classes and >= 1 image per class");
    ImageDataset ds;
    ds.height = ds.width = kCifarSide;
    ds.channels = 3;
    ds.k = cfg.classes;
    const std::size_t plane = ds.plane_size();
    // Templates are fixed by the class index so that train/test draws with different seeds agree.
    std::vector<std::vector<double>> templates(static_cast<std::size_t>(cfg.classes));
    for (int c = 0; c < cfg.classes; ++c) {
        Rng trng = make_rng({0x7e3a11ULL, static_cast<std::uint64_t>(c)});
        auto& t = templates[static_cast<std::size_t>(c)];
        t.assign(ds.image_size(), 0.0);
        for (std::size_t ch = 0; ch < 3; ++ch) {
            for (int wave = 0; wave < 4; ++wave) {
                const double fx = uniform(trng, 0.5, 3.0), fy = uniform(trng, 0.5, 3.0);
                const double phase = uniform(trng, 0.0, 2.0 * M_PI);
                const double amp = uniform(trng, 0.5, 1.0);
                for (std::size_t r = 0; r < kCifarSide; ++r)
                    for (std::size_t col = 0; col < kCifarSide; ++col)
                        t[ch * plane + r * kCifarSide + col] +=
                            amp * std::cos(2.0 * M_PI * (fx * r + fy * col) / kCifarSide + phase);
            }
        }
        const double norm = std::sqrt(std::inner_product(t.begin(), t.end(), t.begin(), 0.0) / t.size());
        for (auto& v : t) v *= cfg.template_amplitude / norm;
    }
    Rng rng = make_rng({cfg.seed, 0x5da1ULL});
    const std::size_t total = cfg.per_class * static_cast<std::size_t>(cfg.classes);
    ds.pixels.resize(total * ds.image_size());
    ds.labels.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
        const int c = static_cast<int>(i % static_cast<std::size_t>(cfg.classes));
        ds.labels[i] = c;
        const double gain = 1.0 + cfg.gain_spread * uniform(rng, -1.0, 1.0);
        const double shift = cfg.brightness_sd * detail::standard_normal(rng);
        std::uint8_t* px = ds.image(i);
        const auto& t = templates[static_cast<std::size_t>(c)];
        for (std::size_t j = 0; j < ds.image_size(); ++j) {
            const double v = 128.0 + shift + gain * t[j] + cfg.noise_sd * detail::standard_normal(rng);
            px[j] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    }
    return ds;
}

}  // namespace lsmix
