// Copyright (c) 2026 the envdiff authors
// SPDX-License-Identifier: Apache-2.0
#include "envdiff/pfm.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>

namespace envdiff {

namespace {

// Reads one whitespace-terminated token, tracking the byte offset.
std::string next_token(const std::string& buf, size_t& pos) {
    while (pos < buf.size() && (buf[pos] == ' ' || buf[pos] == '\n' ||
                                buf[pos] == '\r' || buf[pos] == '\t'))
        ++pos;
    size_t start = pos;
    while (pos < buf.size() && buf[pos] != ' ' && buf[pos] != '\n' &&
           buf[pos] != '\r' && buf[pos] != '\t')
        ++pos;
    if (start == pos) throw ParseError("pfm: unexpected end of header", start);
    return buf.substr(start, pos - start);
}

}  // namespace

PfmImage load_pfm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("pfm: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());

    size_t pos = 0;
    std::string magic = next_token(buf, pos);
    int channels;
    if (magic == "PF")
        channels = 3;
    else if (magic == "Pf")
        channels = 1;
    else
        throw ParseError("pfm: bad magic '" + magic + "'", 0);

    size_t dim_pos = pos;
    std::string ws = next_token(buf, pos);
    std::string hs = next_token(buf, pos);
    int width = 0, height = 0;
    try {
        width = std::stoi(ws);
        height = std::stoi(hs);
    } catch (const std::exception&) {
        throw ParseError("pfm: bad dimensions '" + ws + " " + hs + "'", dim_pos);
    }
    if (width <= 0 || height <= 0)
        throw ParseError("pfm: non-positive dimensions", dim_pos);

    size_t scale_pos = pos;
    std::string ss = next_token(buf, pos);
    double scale = 0.0;
    try {
        scale = std::stod(ss);
    } catch (const std::exception&) {
        throw ParseError("pfm: bad scale '" + ss + "'", scale_pos);
    }
    if (scale >= 0.0)
        throw ParseError("pfm: big-endian payload (scale " + ss +
                             ") is not supported; only little-endian (negative "
                             "scale) files are accepted",
                         scale_pos);
    if (pos >= buf.size() || buf[pos] != '\n')
        throw ParseError("pfm: expected newline after scale", pos);
    ++pos;

    PfmImage img;
    img.width = width;
    img.height = height;
    img.channels = channels;
    size_t count = static_cast<size_t>(width) * height * channels;
    size_t need = count * sizeof(float);
    if (buf.size() - pos < need)
        throw ParseError("pfm: truncated payload, need " + std::to_string(need) +
                             " bytes, have " + std::to_string(buf.size() - pos),
                         pos);
    img.samples.resize(count);
    // bottom-to-top storage
    size_t row_bytes = static_cast<size_t>(width) * channels * sizeof(float);
    for (int i = 0; i < height; ++i) {
        const char* src = buf.data() + pos + static_cast<size_t>(height - 1 - i) * row_bytes;
        std::memcpy(img.samples.data() + static_cast<size_t>(i) * width * channels,
                    src, row_bytes);
    }
    return img;
}

void save_pfm(const std::string& path, const PfmImage& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::invalid_argument("pfm: channels must be 1 or 3");
    if (img.samples.size() !=
        static_cast<size_t>(img.width) * img.height * img.channels)
        throw std::invalid_argument("pfm: sample count does not match dimensions");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("pfm: cannot write " + path);
    char header[64];
    int n = std::snprintf(header, sizeof(header), "%s\n%d %d\n%.4f\n",
                          img.channels == 3 ? "PF" : "Pf", img.width, img.height,
                          -1.0);
    f.write(header, n);
    size_t row_bytes = static_cast<size_t>(img.width) * img.channels * sizeof(float);
    for (int i = img.height - 1; i >= 0; --i)
        f.write(reinterpret_cast<const char*>(img.samples.data() +
                                              static_cast<size_t>(i) * img.width *
                                                  img.channels),
                static_cast<std::streamsize>(row_bytes));
    if (!f) throw std::runtime_error("pfm: write failed for " + path);
}

PfmImage to_pfm(const Tensor3& t) {
    if (t.c != 1 && t.c != 3)
        throw std::invalid_argument("to_pfm: channels must be 1 or 3");
    PfmImage img;
    img.width = t.w;
    img.height = t.h;
    img.channels = t.c;
    img.samples.resize(t.size());
    for (size_t i = 0; i < t.size(); ++i)
        img.samples[i] = static_cast<float>(t.v[i]);
    return img;
}

Tensor3 from_pfm(const PfmImage& img) {
    Tensor3 t(img.height, img.width, img.channels);
    for (size_t i = 0; i < t.size(); ++i) t.v[i] = img.samples[i];
    return t;
}

Tensor3 load_pfm_tensor(const std::string& path) { return from_pfm(load_pfm(path)); }

void save_pfm_tensor(const std::string& path, const Tensor3& t) {
    save_pfm(path, to_pfm(t));
}

}  // namespace envdiff
