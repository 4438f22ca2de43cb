#include "xgs/io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include "xgs/error.hpp"

namespace xgs {

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw InvalidInput("write failed: " + path.string());
}

std::vector<std::uint8_t> read_binary_file(const fs::path& path) {
    const std::string s = read_text_file(path);
    return {s.begin(), s.end()};
}

Json parse_json(std::string_view text) {
    try {
        return Json::parse(text.begin(), text.end());
    } catch (const Json::parse_error& e) {
        const std::size_t upto = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + upto, '\n'));
        throw ParseError("JSON parse error at line " + std::to_string(line) + ": " + e.what(), line);
    }
}

Json read_json_file(const fs::path& path) {
    try {
        return parse_json(read_text_file(path));
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.line());
    }
}

void write_json_file(const fs::path& path, const Json& j) { write_text_file(path, j.dump(2) + "\n"); }

namespace {

template <int N>
Eigen::Matrix<double, N, 1> vec_from(const Json& j, const char* key) {
    const Json& a = j.at(key);
    if (!a.is_array() || a.size() != N) {
        throw ParseError(std::string("field '") + key + "' must be an array of " + std::to_string(N));
    }
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) v(i) = a.at(i).get<double>();
    return v;
}

Json to_array(const Eigen::Ref<const Eigen::VectorXd>& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Json matrix_to_json(const Eigen::MatrixXd& m) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_array(m.row(r).transpose()));
    return rows;
}

Eigen::MatrixXd matrix_from_json(const Json& j, int rows, int cols, const char* what) {
    if (!j.is_array() || static_cast<int>(j.size()) != rows) {
        throw ParseError(std::string(what) + ": expected " + std::to_string(rows) + " rows");
    }
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        const Json& row = j[r];
        if (!row.is_array() || static_cast<int>(row.size()) != cols) {
            throw ParseError(std::string(what) + ": row " + std::to_string(r) + " must have " +
                             std::to_string(cols) + " entries");
        }
        for (int c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
    }
    return m;
}

// Rethrows library type errors as data errors.
template <class F>
auto guarded(const char* what, F&& f) {
    try {
        return f();
    } catch (const Json::exception& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    }
}

}  // namespace

Json scene_to_json(const GaussianField& field, int D, const std::vector<int>& regions) {
    Json gs = Json::array();
    for (std::size_t i = 0; i < field.size(); ++i) {
        const Gaussian& g = field[i];
        Json e;
        e["mu"] = to_array(g.mu);
        e["quat"] = {g.rotation.w(), g.rotation.x(), g.rotation.y(), g.rotation.z()};
        e["scale"] = to_array(g.scale);
        e["opacity"] = g.opacity;
        e["color"] = to_array(g.color);
        e["logits"] = to_array(g.logits);
        if (i < regions.size()) e["region"] = regions[i];
        gs.push_back(std::move(e));
    }
    return Json{{"K", field.K()}, {"D", D}, {"gaussians", std::move(gs)}};
}

SceneData scene_from_json(const Json& j) {
    return guarded("scene", [&] {
        SceneData s{GaussianField(j.at("K").get<int>()), j.at("D").get<int>(), {}};
        if (s.field.K() < 1 || s.D < 1) throw ParseError("scene: K and D must be >= 1");
        for (const Json& e : j.at("gaussians")) {
            Gaussian g;
            g.mu = vec_from<3>(e, "mu");
            const Eigen::Vector4d q = vec_from<4>(e, "quat");
            if (!(q.norm() > 0.0)) throw ParseError("scene: zero quaternion");
            g.rotation = Eigen::Quaterniond(q(0), q(1), q(2), q(3));
            if (std::abs(q.norm() - 1.0) > 1e-12) g.rotation.normalize();
            g.scale = vec_from<3>(e, "scale");
            g.opacity = e.at("opacity").get<double>();
            g.color = vec_from<3>(e, "color");
            const Json& lj = e.at("logits");
            if (!lj.is_array() || static_cast<int>(lj.size()) != s.field.K()) {
                throw ParseError("scene: logits must have K entries");
            }
            g.logits.resize(s.field.K());
            for (int k = 0; k < s.field.K(); ++k) g.logits(k) = lj[k].get<double>();
            s.regions.push_back(e.contains("region") ? e["region"].get<int>() : -1);
            try {
                s.field.add(std::move(g));
            } catch (const InvalidInput& err) {
                throw ParseError(std::string("scene: ") + err.what());
            }
        }
        return s;
    });
}

Json codebook_to_json(const Codebook& cb) {
    return Json{{"E", matrix_to_json(cb.E)},
                {"N", to_array(cb.N)},
                {"M", matrix_to_json(cb.M)},
                {"lambda", cb.lambda},
                {"epsilon", cb.epsilon}};
}

Codebook codebook_from_json(const Json& j, int reservoir_capacity) {
    return guarded("codebook", [&] {
        const Json& N = j.at("N");
        const int K = static_cast<int>(N.size());
        const Json& E = j.at("E");
        if (K < 1 || !E.is_array() || E.empty() || !E[0].is_array()) throw ParseError("codebook: empty");
        const int D = static_cast<int>(E[0].size());
        Codebook cb(K, D, j.at("lambda").get<double>(), j.at("epsilon").get<double>(), reservoir_capacity);
        cb.E = matrix_from_json(E, K, D, "codebook E");
        cb.M = matrix_from_json(j.at("M"), K, D, "codebook M");
        for (int k = 0; k < K; ++k) cb.N(k) = N[k].get<double>();
        return cb;
    });
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) |
           (std::uint32_t{p[3]} << 24);
}

}  // namespace

void write_xgsf(const fs::path& path, const Tensor3& t) {
    std::string out;
    out.reserve(16 + 4 * t.size());
    out += "XGSF";
    put_u32(out, static_cast<std::uint32_t>(t.channels()));
    put_u32(out, static_cast<std::uint32_t>(t.height()));
    put_u32(out, static_cast<std::uint32_t>(t.width()));
    for (double v : t.data()) {
        const float f = static_cast<float>(v);
        std::uint32_t bits = 0;
        std::memcpy(&bits, &f, 4);
        put_u32(out, bits);
    }
    write_text_file(path, out);
}

Tensor3 read_xgsf(const fs::path& path) {
    const std::vector<std::uint8_t> bytes = read_binary_file(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "XGSF", 4) != 0) {
        throw ParseError(path.string() + ": not an XGSF file");
    }
    const std::uint32_t D = get_u32(&bytes[4]);
    const std::uint32_t H = get_u32(&bytes[8]);
    const std::uint32_t W = get_u32(&bytes[12]);
    const std::uint64_t count = std::uint64_t{D} * H * W;
    if (bytes.size() != 16 + 4 * count) throw ParseError(path.string() + ": XGSF size does not match header");
    Tensor3 t(static_cast<int>(D), static_cast<int>(H), static_cast<int>(W));
    auto data = t.data();
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint32_t bits = get_u32(&bytes[16 + 4 * i]);
        float f = 0.0f;
        std::memcpy(&f, &bits, 4);
        data[i] = f;
    }
    return t;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw ParseError(std::string("png: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

// rows: height x (width * channels * bytes) already packed big-endian for 16-bit.
void write_png(const fs::path& path, int height, int width, int color_type, int bit_depth,
               const std::vector<std::uint8_t>& packed) {
    FilePtr f(std::fopen(path.string().c_str(), "wb"));
    if (!f) throw InvalidInput("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    png_infop info = png_create_info_struct(png);
    try {
        png_init_io(png, f.get());
        png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
                     color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        const std::size_t stride = packed.size() / std::max(height, 1);
        for (int r = 0; r < height; ++r) png_write_row(png, packed.data() + r * stride);
        png_write_end(png, nullptr);
    } catch (...) {
        png_destroy_write_struct(&png, &info);
        throw;
    }
    png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> read_png(const fs::path& path, int& height, int& width, int& color_type,
                                   int& bit_depth) {
    FilePtr f(std::fopen(path.string().c_str(), "rb"));
    if (!f) throw InvalidInput("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
    png_infop info = png_create_info_struct(png);
    std::vector<std::uint8_t> packed;
    try {
        png_init_io(png, f.get());
        png_read_info(png, info);
        width = static_cast<int>(png_get_image_width(png, info));
        height = static_cast<int>(png_get_image_height(png, info));
        color_type = png_get_color_type(png, info);
        bit_depth = png_get_bit_depth(png, info);
        if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
        png_read_update_info(png, info);
        color_type = png_get_color_type(png, info);
        const std::size_t stride = png_get_rowbytes(png, info);
        packed.resize(stride * height);
        for (int r = 0; r < height; ++r) png_read_row(png, packed.data() + r * stride, nullptr);
        png_read_end(png, nullptr);
    } catch (const ParseError& e) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError(path.string() + ": " + e.what());
    }
    png_destroy_read_struct(&png, &info, nullptr);
    return packed;
}

}  // namespace

void write_png_rgb(const fs::path& path, const Tensor3& color) {
    if (color.channels() != 3) throw InvalidInput("write_png_rgb: expected 3 channels");
    const int H = color.height();
    const int W = color.width();
    std::vector<std::uint8_t> packed(static_cast<std::size_t>(H) * W * 3);
    for (int u = 0; u < H; ++u) {
        for (int v = 0; v < W; ++v) {
            for (int c = 0; c < 3; ++c) {
                const double x = std::clamp(color(c, u, v), 0.0, 1.0);
                packed[(static_cast<std::size_t>(u) * W + v) * 3 + c] =
                    static_cast<std::uint8_t>(std::lround(x * 255.0));
            }
        }
    }
    write_png(path, H, W, PNG_COLOR_TYPE_RGB, 8, packed);
}

Tensor3 read_png_rgb(const fs::path& path) {
    int H = 0, W = 0, ct = 0, bd = 0;
    const std::vector<std::uint8_t> packed = read_png(path, H, W, ct, bd);
    if (bd != 8 || (ct != PNG_COLOR_TYPE_RGB && ct != PNG_COLOR_TYPE_RGB_ALPHA)) {
        throw ParseError(path.string() + ": expected an 8-bit RGB PNG");
    }
    const int ch = ct == PNG_COLOR_TYPE_RGB ? 3 : 4;
    Tensor3 t(3, H, W);
    for (int u = 0; u < H; ++u) {
        for (int v = 0; v < W; ++v) {
            for (int c = 0; c < 3; ++c) {
                t(c, u, v) = packed[(static_cast<std::size_t>(u) * W + v) * ch + c] / 255.0;
            }
        }
    }
    return t;
}

void write_png_gray16(const fs::path& path, int height, int width, const std::vector<std::uint16_t>& values) {
    if (values.size() != static_cast<std::size_t>(height) * width) {
        throw InvalidInput("write_png_gray16: value count does not match resolution");
    }
    std::vector<std::uint8_t> packed(values.size() * 2);
    for (std::size_t i = 0; i < values.size(); ++i) {
        packed[2 * i] = static_cast<std::uint8_t>(values[i] >> 8);
        packed[2 * i + 1] = static_cast<std::uint8_t>(values[i] & 0xFFu);
    }
    write_png(path, height, width, PNG_COLOR_TYPE_GRAY, 16, packed);
}

std::vector<std::uint16_t> read_png_gray16(const fs::path& path, int& height, int& width) {
    int ct = 0, bd = 0;
    const std::vector<std::uint8_t> packed = read_png(path, height, width, ct, bd);
    if (bd != 16 || ct != PNG_COLOR_TYPE_GRAY) throw ParseError(path.string() + ": expected a 16-bit gray PNG");
    std::vector<std::uint16_t> out(static_cast<std::size_t>(height) * width);
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<std::uint16_t>((packed[2 * i] << 8) | packed[2 * i + 1]);
    }
    return out;
}

void write_region_annotation(const fs::path& png_path, const fs::path& json_path, const RegionAnnotation& a) {
    std::vector<std::uint16_t> v(a.labels.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (a.labels[i] < -1 || a.labels[i] >= 65535) throw InvalidInput("region label out of 16-bit range");
        v[i] = a.labels[i] < 0 ? 65535 : static_cast<std::uint16_t>(a.labels[i]);
    }
    write_png_gray16(png_path, a.height, a.width, v);
    write_json_file(json_path,
                    Json{{"R", a.regions()}, {"D", static_cast<int>(a.phi.cols())}, {"phi", matrix_to_json(a.phi)}});
}

RegionAnnotation read_region_annotation(const fs::path& png_path, const fs::path& json_path) {
    RegionAnnotation a;
    const std::vector<std::uint16_t> v = read_png_gray16(png_path, a.height, a.width);
    a.labels.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) a.labels[i] = v[i] == 65535 ? -1 : static_cast<int>(v[i]);
    const Json j = read_json_file(json_path);
    a.phi = guarded("region table", [&] {
        return matrix_from_json(j.at("phi"), j.at("R").get<int>(), j.at("D").get<int>(), "phi");
    });
    a.validate();
    return a;
}

void write_trajectory_csv(const fs::path& path, const std::vector<std::pair<int, CameraPose>>& poses) {
    std::ostringstream os;
    os.precision(17);
    os << "frame_id,qw,qx,qy,qz,tx,ty,tz\n";
    for (const auto& [id, pose] : poses) {
        const Eigen::Quaterniond q(pose.rotation);
        const Eigen::Vector3d& t = pose.translation;
        os << id << ',' << q.w() << ',' << q.x() << ',' << q.y() << ',' << q.z() << ',' << t.x() << ','
           << t.y() << ',' << t.z() << '\n';
    }
    write_text_file(path, os.str());
}

std::vector<std::pair<int, CameraPose>> read_trajectory_csv(const fs::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    std::vector<std::pair<int, CameraPose>> out;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.rfind("frame_id", 0) == 0) continue;
        std::array<double, 8> f{};
        std::istringstream row(line);
        std::string cell;
        int n = 0;
        while (std::getline(row, cell, ',') && n < 8) {
            try {
                f[n++] = std::stod(cell);
            } catch (const std::exception&) {
                throw ParseError(path.string() + ": bad number '" + cell + "'", lineno);
            }
        }
        if (n != 8) throw ParseError(path.string() + ": expected 8 columns", lineno);
        const Eigen::Quaterniond q(f[1], f[2], f[3], f[4]);
        out.emplace_back(static_cast<int>(f[0]),
                         CameraPose::from_quaternion(q.normalized(), Eigen::Vector3d(f[5], f[6], f[7])));
    }
    return out;
}

Json pose_to_json(const CameraPose& pose) {
    const Eigen::Quaterniond q(pose.rotation);
    return Json{{"quat", {q.w(), q.x(), q.y(), q.z()}}, {"t", to_array(pose.translation)}};
}

CameraPose pose_from_json(const Json& j) {
    return guarded("pose", [&] {
        const Eigen::Vector4d q = vec_from<4>(j, "quat");
        if (!(q.norm() > 0.0)) throw ParseError("pose: zero quaternion");
        return CameraPose::from_quaternion(Eigen::Quaterniond(q(0), q(1), q(2), q(3)).normalized(),
                                           vec_from<3>(j, "t"));
    });
}

Json intrinsics_to_json(const CameraIntrinsics& k) {
    return Json{{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx},         {"cy", k.cy},
                {"width", k.width}, {"height", k.height}, {"near", k.near}, {"far", k.far}};
}

CameraIntrinsics intrinsics_from_json(const Json& j) {
    return guarded("intrinsics", [&] {
        CameraIntrinsics k;
        k.fx = j.at("fx").get<double>();
        k.fy = j.at("fy").get<double>();
        k.cx = j.at("cx").get<double>();
        k.cy = j.at("cy").get<double>();
        k.width = j.at("width").get<int>();
        k.height = j.at("height").get<int>();
        k.near = j.value("near", 0.01);
        k.far = j.value("far", 100.0);
        return k;
    });
}

}  // namespace xgs
