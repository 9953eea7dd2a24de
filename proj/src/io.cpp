#include "hvseg/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "hvseg/error.hpp"

namespace hvseg::io {

static_assert(std::endian::native == std::endian::little,
              "raster files are written with a little-endian memory layout");

namespace {

std::string lower_extension(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

void put_u32(std::string& buf, std::uint32_t v) {
    char bytes[4];
    std::memcpy(bytes, &v, 4);
    buf.append(bytes, 4);
}

std::uint32_t get_u32(const char* p) {
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    return v;
}

cv::Mat to_mat(const Image& image) {
    const int type = CV_8UC(image.channels);
    cv::Mat view(image.height, image.width, type, const_cast<std::uint8_t*>(image.pixels.data()));
    cv::Mat bgr;
    switch (image.channels) {
        case 3: cv::cvtColor(view, bgr, cv::COLOR_RGB2BGR); break;
        case 4: cv::cvtColor(view, bgr, cv::COLOR_RGBA2BGRA); break;
        default: bgr = view.clone(); break;
    }
    return bgr;
}

Image from_mat(const cv::Mat& mat) {
    cv::Mat m8 = mat;
    if (mat.depth() == CV_16U) mat.convertTo(m8, CV_8U, 1.0 / 257.0);
    require(m8.depth() == CV_8U, "unsupported image sample depth", ErrorCode::unsupported);
    cv::Mat rgb;
    switch (m8.channels()) {
        case 3: cv::cvtColor(m8, rgb, cv::COLOR_BGR2RGB); break;
        case 4: cv::cvtColor(m8, rgb, cv::COLOR_BGRA2RGBA); break;
        default: rgb = m8; break;
    }
    Image out(rgb.cols, rgb.rows, rgb.channels());
    for (int y = 0; y < rgb.rows; ++y)
        std::memcpy(out.at(0, y), rgb.ptr(y), static_cast<std::size_t>(rgb.cols) * rgb.channels());
    return out;
}

}  // namespace

void write_float_raster(const std::filesystem::path& path,
                        const std::vector<Raster<float>>& channels) {
    require(!channels.empty(), "float raster needs at least one channel");
    for (const auto& c : channels) require_same_shape(channels.front(), c, "write_float_raster");
    std::string buf;
    buf.reserve(kFloatRasterHeaderBytes + channels.size() * channels.front().size() * 4);
    buf.append(kFloatRasterMagic, 4);
    put_u32(buf, static_cast<std::uint32_t>(channels.front().width()));
    put_u32(buf, static_cast<std::uint32_t>(channels.front().height()));
    put_u32(buf, static_cast<std::uint32_t>(channels.size()));
    for (const auto& c : channels)
        buf.append(reinterpret_cast<const char*>(c.data().data()), c.size() * sizeof(float));
    write_file_atomic(path, buf);
}

std::vector<Raster<float>> read_float_raster(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
    char header[kFloatRasterHeaderBytes];
    in.read(header, sizeof(header));
    require(in.gcount() == static_cast<std::streamsize>(sizeof(header)) &&
                std::memcmp(header, kFloatRasterMagic, 4) == 0,
            "not a float raster file: " + path.string(), ErrorCode::unsupported);
    const auto w = get_u32(header + 4);
    const auto h = get_u32(header + 8);
    const auto c = get_u32(header + 12);
    require(w < (1u << 20) && h < (1u << 20) && c >= 1 && c < 64,
            "implausible float raster header in " + path.string(), ErrorCode::unsupported);
    std::vector<Raster<float>> out;
    for (std::uint32_t k = 0; k < c; ++k) {
        Raster<float> r(static_cast<int>(w), static_cast<int>(h));
        in.read(reinterpret_cast<char*>(r.data().data()),
                static_cast<std::streamsize>(r.size() * sizeof(float)));
        require(static_cast<std::size_t>(in.gcount()) == r.size() * sizeof(float),
                "truncated float raster " + path.string(), ErrorCode::io);
        out.push_back(std::move(r));
    }
    return out;
}

LabelMap read_label_map(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw Error(ErrorCode::not_found, "label file not found: " + path.string());
    if (lower_extension(path) == ".f32") {
        auto channels = read_float_raster(path);
        const auto& f = channels.front();
        LabelMap out(f.width(), f.height(), 0);
        for (std::size_t i = 0; i < f.size(); ++i) {
            require(f[i] >= 0.0f, "negative label in " + path.string());
            out[i] = static_cast<std::uint32_t>(f[i]);
        }
        return out;
    }
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    require(!m.empty(), "cannot decode label image " + path.string(), ErrorCode::unsupported);
    require(m.channels() == 1, "label image must be single-channel: " + path.string(),
            ErrorCode::unsupported);
    cv::Mat m32;
    m.convertTo(m32, CV_32S);
    LabelMap out(m32.cols, m32.rows, 0);
    for (int y = 0; y < m32.rows; ++y) {
        const auto* row = m32.ptr<std::int32_t>(y);
        for (int x = 0; x < m32.cols; ++x) out(x, y) = static_cast<std::uint32_t>(std::max(0, row[x]));
    }
    return out;
}

void write_label_map(const std::filesystem::path& path, const LabelMap& labels) {
    if (lower_extension(path) == ".f32") {
        Raster<float> f(labels.width(), labels.height());
        for (std::size_t i = 0; i < labels.size(); ++i) {
            require(labels[i] <= (1u << 24), "label id exceeds float precision");
            f[i] = static_cast<float>(labels[i]);
        }
        write_float_raster(path, {f});
        return;
    }
    cv::Mat m(labels.height(), labels.width(), CV_16U);
    for (int y = 0; y < labels.height(); ++y) {
        auto* row = m.ptr<std::uint16_t>(y);
        for (int x = 0; x < labels.width(); ++x) {
            require(labels(x, y) <= 0xFFFF, "label id exceeds 16 bits; use a .f32 label file");
            row[x] = static_cast<std::uint16_t>(labels(x, y));
        }
    }
    require(cv::imwrite(path.string(), m), "cannot write " + path.string(), ErrorCode::io);
}

Image read_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw Error(ErrorCode::not_found, "image not found: " + path.string());
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    require(!m.empty(), "cannot decode image " + path.string(), ErrorCode::unsupported);
    return from_mat(m);
}

void write_image(const std::filesystem::path& path, const Image& image) {
    require(cv::imwrite(path.string(), to_mat(image)), "cannot write " + path.string(),
            ErrorCode::io);
}

std::vector<std::uint8_t> encode_png(const Image& image) {
    std::vector<std::uint8_t> buf;
    require(cv::imencode(".png", to_mat(image), buf), "png encoding failed", ErrorCode::io);
    return buf;
}

Image decode_image(const std::vector<std::uint8_t>& bytes) {
    cv::Mat m = cv::imdecode(bytes, cv::IMREAD_UNCHANGED);
    require(!m.empty(), "cannot decode image bytes", ErrorCode::unsupported);
    return from_mat(m);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    auto tmp = path;
    tmp += ".tmp" + std::to_string(rng() % 1000000007ULL);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(static_cast<bool>(out), "cannot write " + tmp.string(), ErrorCode::io);
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        require(static_cast<bool>(out), "write failed for " + tmp.string(), ErrorCode::io);
    }
    std::filesystem::rename(tmp, path);
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::not_found, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string fnv1a_hex(const void* data, std::size_t size) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < size; ++i) {
        hash ^= p[i];
        hash *= 0x100000001b3ULL;
    }
    char out[17];
    std::snprintf(out, sizeof(out), "%016llx", static_cast<unsigned long long>(hash));
    return out;
}

std::string file_content_hash(const std::filesystem::path& path) {
    const auto bytes = read_text_file(path);
    return fnv1a_hex(bytes.data(), bytes.size());
}

}  // namespace hvseg::io
