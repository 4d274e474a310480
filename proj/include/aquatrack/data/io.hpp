// Sequence directory persistence:
//   frames_raw/%06d.png   8-bit RGB
//   frames_enh/%06d.png   8-bit RGB
//   depth/%06d.pgm        16-bit binary PGM (big-endian, maxval 65535)
//   masks/%06d.png        8-bit gray, 0 or 255
//   groundtruth.txt       x,y,w,h integers, one line per frame
//   absent.txt            0/1 per line
//   attributes.txt        32 comma-separated 0/1 flags on one line
//   language.txt          one line
//   meta.json             fps, size, seed, frame count, format version
//
// Storage is lossless: generator output is pre-quantized to 8/16-bit grids so
// write -> load reproduces every tensor bit-exactly.
#pragma once

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "aquatrack/data/types.hpp"

namespace aquatrack {

namespace io_detail {

struct PngImage {
    int width = 0, height = 0, channels = 0;
    std::vector<uint8_t> pixels;  // row-major, interleaved
};

class FileHandle {
public:
    FileHandle(const std::string& path, const char* mode) : f_(std::fopen(path.c_str(), mode)) {}
    ~FileHandle() {
        if (f_) std::fclose(f_);
    }
    FILE* get() const { return f_; }

private:
    FILE* f_ = nullptr;
};

inline void write_png(const std::string& path, const std::vector<uint8_t>& pixels, int width,
                      int height, int channels) {
    FileHandle fp(path, "wb");
    if (!fp.get()) throw std::runtime_error("cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng write error for " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
                 channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<size_t>(height));
    for (int i = 0; i < height; ++i)
        rows[static_cast<size_t>(i)] = const_cast<png_bytep>(
            pixels.data() + static_cast<size_t>(i) * width * channels);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline PngImage read_png(const std::string& path) {
    FileHandle fp(path, "rb");
    if (!fp.get()) throw std::runtime_error("missing file: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("libpng init failed for " + path);
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("malformed PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_read_info(png, info);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    png_read_update_info(png, info);
    PngImage img;
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.channels = static_cast<int>(png_get_channels(png, info));
    img.pixels.resize(static_cast<size_t>(img.width) * img.height * img.channels);
    std::vector<png_bytep> rows(static_cast<size_t>(img.height));
    for (int i = 0; i < img.height; ++i)
        rows[static_cast<size_t>(i)] =
            img.pixels.data() + static_cast<size_t>(i) * img.width * img.channels;
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

inline void write_pgm16(const std::string& path, const std::vector<uint16_t>& pixels, int width,
                        int height) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os << "P5\n" << width << " " << height << "\n65535\n";
    for (uint16_t v : pixels) {
        os.put(static_cast<char>(v >> 8));
        os.put(static_cast<char>(v & 0xff));
    }
    if (!os) throw std::runtime_error("write failed: " + path);
}

inline std::vector<uint16_t> read_pgm16(const std::string& path, int& width, int& height) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("missing file: " + path);
    std::string magic;
    int maxval = 0;
    is >> magic >> width >> height >> maxval;
    if (magic != "P5" || maxval != 65535 || width <= 0 || height <= 0)
        throw std::runtime_error("malformed 16-bit PGM header in " + path);
    is.get();  // single whitespace after maxval
    std::vector<uint16_t> pixels(static_cast<size_t>(width) * height);
    for (auto& v : pixels) {
        int hi = is.get(), lo = is.get();
        if (hi < 0 || lo < 0) throw std::runtime_error("truncated PGM data in " + path);
        v = static_cast<uint16_t>((hi << 8) | lo);
    }
    return pixels;
}

inline std::string frame_name(int index, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06d.%s", index, ext);
    return buf;
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("missing file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

inline std::vector<int> parse_int_list(const std::string& s, const std::string& where) {
    std::vector<int> out;
    std::string cur;
    auto flush = [&] {
        if (cur.empty()) throw std::runtime_error("empty field in " + where);
        size_t pos = 0;
        int v;
        try {
            v = std::stoi(cur, &pos);
        } catch (const std::exception&) {
            throw std::runtime_error("non-integer field '" + cur + "' in " + where);
        }
        if (pos != cur.size()) throw std::runtime_error("trailing junk in field '" + cur + "' in " + where);
        out.push_back(v);
        cur.clear();
    };
    for (char c : s) {
        if (c == ',') flush();
        else if (!std::isspace(static_cast<unsigned char>(c))) cur.push_back(c);
    }
    flush();
    return out;
}

}  // namespace io_detail

inline void write_sequence(const MultimodalSequence& seq, const std::string& dir) {
    namespace fs = std::filesystem;
    validate_sequence(seq);
    const int H = seq.height(), W = seq.width(), n = seq.length();
    for (const char* sub : {"frames_raw", "frames_enh", "depth", "masks"})
        fs::create_directories(fs::path(dir) / sub);

    std::vector<uint8_t> rgb(static_cast<size_t>(H) * W * 3);
    std::vector<uint8_t> gray(static_cast<size_t>(H) * W);
    std::vector<uint16_t> d16(static_cast<size_t>(H) * W);
    for (int t = 0; t < n; ++t) {
        auto to_rgb8 = [&](const Tensor& img) {
            for (int64_t i = 0; i < img.size(); ++i)
                rgb[static_cast<size_t>(i)] = static_cast<uint8_t>(std::lround(img[i] * 255.0));
        };
        to_rgb8(seq.frames_raw[static_cast<size_t>(t)]);
        io_detail::write_png((fs::path(dir) / "frames_raw" / io_detail::frame_name(t, "png")).string(),
                             rgb, W, H, 3);
        to_rgb8(seq.frames_enhanced[static_cast<size_t>(t)]);
        io_detail::write_png((fs::path(dir) / "frames_enh" / io_detail::frame_name(t, "png")).string(),
                             rgb, W, H, 3);
        const Tensor& dep = seq.depth[static_cast<size_t>(t)];
        for (int64_t i = 0; i < dep.size(); ++i)
            d16[static_cast<size_t>(i)] = static_cast<uint16_t>(std::lround(dep[i] * 65535.0));
        io_detail::write_pgm16((fs::path(dir) / "depth" / io_detail::frame_name(t, "pgm")).string(),
                               d16, W, H);
        const Tensor& m = seq.masks[static_cast<size_t>(t)];
        for (int64_t i = 0; i < m.size(); ++i)
            gray[static_cast<size_t>(i)] = m[i] != 0.0 ? 255 : 0;
        io_detail::write_png((fs::path(dir) / "masks" / io_detail::frame_name(t, "png")).string(),
                             gray, W, H, 1);
    }

    std::ofstream gt(fs::path(dir) / "groundtruth.txt");
    for (const Box& b : seq.boxes) gt << b.x << "," << b.y << "," << b.w << "," << b.h << "\n";
    std::ofstream ab(fs::path(dir) / "absent.txt");
    for (bool a : seq.absent) ab << (a ? 1 : 0) << "\n";
    std::ofstream at(fs::path(dir) / "attributes.txt");
    for (int i = 0; i < kAttributeCount; ++i)
        at << (i ? "," : "") << (seq.attributes[static_cast<size_t>(i)] ? 1 : 0);
    at << "\n";
    std::ofstream lang(fs::path(dir) / "language.txt");
    lang << seq.language << "\n";

    nlohmann::json meta;
    meta["format_version"] = 1;
    meta["id"] = seq.id;
    meta["fps"] = seq.fps;
    meta["width"] = W;
    meta["height"] = H;
    meta["n_frames"] = n;
    meta["seed"] = seq.seed;
    std::ofstream mj(fs::path(dir) / "meta.json");
    mj << meta.dump(2) << "\n";
    if (!mj) throw std::runtime_error("write failed: " + (fs::path(dir) / "meta.json").string());
}

inline MultimodalSequence load_sequence(const std::string& dir) {
    namespace fs = std::filesystem;
    const std::string meta_path = (fs::path(dir) / "meta.json").string();
    std::ifstream mj(meta_path);
    if (!mj) throw std::runtime_error("missing file: " + meta_path);
    nlohmann::json meta;
    try {
        mj >> meta;
    } catch (const std::exception& e) {
        throw std::runtime_error("malformed JSON in " + meta_path + ": " + e.what());
    }

    MultimodalSequence seq;
    seq.id = meta.value("id", fs::path(dir).filename().string());
    seq.fps = meta.at("fps").get<int>();
    seq.seed = meta.value("seed", 0ULL);
    const int W = meta.at("width").get<int>();
    const int H = meta.at("height").get<int>();
    const int n = meta.at("n_frames").get<int>();
    if (n < 1) throw std::runtime_error(meta_path + ": n_frames must be >= 1");

    const std::string gt_path = (fs::path(dir) / "groundtruth.txt").string();
    auto gt_lines = io_detail::read_lines(gt_path);
    if (static_cast<int>(gt_lines.size()) != n)
        throw std::runtime_error(gt_path + ": has " + std::to_string(gt_lines.size()) +
                                 " lines, expected " + std::to_string(n));
    for (int t = 0; t < n; ++t) {
        auto v = io_detail::parse_int_list(gt_lines[static_cast<size_t>(t)],
                                           gt_path + " line " + std::to_string(t + 1));
        if (v.size() != 4)
            throw std::runtime_error(gt_path + " line " + std::to_string(t + 1) +
                                     ": expected 4 fields, got " + std::to_string(v.size()));
        seq.boxes.push_back(Box{v[0], v[1], v[2], v[3]});
    }

    const std::string ab_path = (fs::path(dir) / "absent.txt").string();
    auto ab_lines = io_detail::read_lines(ab_path);
    if (static_cast<int>(ab_lines.size()) != n)
        throw std::runtime_error(ab_path + ": has " + std::to_string(ab_lines.size()) +
                                 " lines, expected " + std::to_string(n));
    for (int t = 0; t < n; ++t) {
        const std::string& s = ab_lines[static_cast<size_t>(t)];
        if (s != "0" && s != "1")
            throw std::runtime_error(ab_path + " line " + std::to_string(t + 1) +
                                     ": expected 0 or 1, got '" + s + "'");
        seq.absent.push_back(s == "1");
    }

    const std::string attr_path = (fs::path(dir) / "attributes.txt").string();
    auto attr_lines = io_detail::read_lines(attr_path);
    if (attr_lines.empty()) throw std::runtime_error(attr_path + ": empty");
    auto flags = io_detail::parse_int_list(attr_lines[0], attr_path + " line 1");
    if (static_cast<int>(flags.size()) != kAttributeCount)
        throw std::runtime_error(attr_path + ": has " + std::to_string(flags.size()) +
                                 " flags, expected " + std::to_string(kAttributeCount));
    for (int i = 0; i < kAttributeCount; ++i) {
        if (flags[static_cast<size_t>(i)] != 0 && flags[static_cast<size_t>(i)] != 1)
            throw std::runtime_error(attr_path + ": flag " + std::to_string(i) + " must be 0 or 1");
        seq.attributes[static_cast<size_t>(i)] = flags[static_cast<size_t>(i)] == 1;
    }

    const std::string lang_path = (fs::path(dir) / "language.txt").string();
    auto lang_lines = io_detail::read_lines(lang_path);
    if (lang_lines.empty() || lang_lines[0].empty())
        throw std::runtime_error(lang_path + ": expected a non-empty first line");
    seq.language = lang_lines[0];

    for (int t = 0; t < n; ++t) {
        const std::string raw_path =
            (fs::path(dir) / "frames_raw" / io_detail::frame_name(t, "png")).string();
        const std::string enh_path =
            (fs::path(dir) / "frames_enh" / io_detail::frame_name(t, "png")).string();
        for (auto [path, out] : {std::pair{raw_path, &seq.frames_raw},
                                 std::pair{enh_path, &seq.frames_enhanced}}) {
            auto img = io_detail::read_png(path);
            if (img.width != W || img.height != H || img.channels != 3)
                throw std::runtime_error(path + ": expected " + std::to_string(W) + "x" +
                                         std::to_string(H) + " RGB");
            Tensor t3({H, W, 3});
            for (int64_t i = 0; i < t3.size(); ++i)
                t3[i] = img.pixels[static_cast<size_t>(i)] / 255.0;
            out->push_back(std::move(t3));
        }
        const std::string dep_path =
            (fs::path(dir) / "depth" / io_detail::frame_name(t, "pgm")).string();
        int dw = 0, dh = 0;
        auto d16 = io_detail::read_pgm16(dep_path, dw, dh);
        if (dw != W || dh != H)
            throw std::runtime_error(dep_path + ": expected " + std::to_string(W) + "x" +
                                     std::to_string(H));
        Tensor dep({H, W});
        for (int64_t i = 0; i < dep.size(); ++i) dep[i] = d16[static_cast<size_t>(i)] / 65535.0;
        seq.depth.push_back(std::move(dep));

        const std::string mask_path =
            (fs::path(dir) / "masks" / io_detail::frame_name(t, "png")).string();
        auto mimg = io_detail::read_png(mask_path);
        if (mimg.width != W || mimg.height != H || mimg.channels != 1)
            throw std::runtime_error(mask_path + ": expected " + std::to_string(W) + "x" +
                                     std::to_string(H) + " gray");
        Tensor m({H, W});
        for (int64_t i = 0; i < m.size(); ++i)
            m[i] = mimg.pixels[static_cast<size_t>(i)] >= 128 ? 1.0 : 0.0;
        seq.masks.push_back(std::move(m));
    }

    validate_sequence(seq);
    return seq;
}

// Sorted list of sequence directories (those containing meta.json) under root.
inline std::vector<std::string> list_sequence_dirs(const std::string& root) {
    namespace fs = std::filesystem;
    if (!fs::exists(root)) throw std::runtime_error("missing dataset directory: " + root);
    std::vector<std::string> dirs;
    for (const auto& entry : fs::directory_iterator(root))
        if (entry.is_directory() && fs::exists(entry.path() / "meta.json"))
            dirs.push_back(entry.path().string());
    std::sort(dirs.begin(), dirs.end());
    return dirs;
}

}  // namespace aquatrack
