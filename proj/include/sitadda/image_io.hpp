#pragma once

// PNG/TIFF ingestion and export. Decoding is delegated to OpenCV's
// imgcodecs; everything downstream works on sitadda::Image.

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>

#include "dataset.hpp"
#include "errors.hpp"
#include "image.hpp"

namespace sitadda {

namespace fs = std::filesystem;

/// Reads an 8- or 16-bit grayscale PNG/TIFF into a raw [0,255] image.
/// 16-bit data is mapped with a fixed /257 so contrast never depends on content.
inline Image read_grayscale(const fs::path& path)
{
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_ANYDEPTH | cv::IMREAD_GRAYSCALE);
    if (m.empty()) throw DataError("cannot read image '" + path.string() + "'");
    Image out(m.rows, m.cols, Domain::Raw0To255);
    if (m.depth() == CV_8U) {
        for (int y = 0; y < m.rows; ++y)
            for (int x = 0; x < m.cols; ++x) out.at(y, x) = m.at<std::uint8_t>(y, x);
    } else if (m.depth() == CV_16U) {
        for (int y = 0; y < m.rows; ++y)
            for (int x = 0; x < m.cols; ++x) out.at(y, x) = round_half_up(m.at<std::uint16_t>(y, x) / 257.0);
    } else {
        throw DataError("unsupported bit depth in '" + path.string() + "' (expected 8 or 16 bit)");
    }
    return out;
}

/// Writes an image as 8-bit grayscale; the extension picks the codec.
inline void write_grayscale(const fs::path& path, const Image& img)
{
    const Image raw = img.domain == Domain::Raw0To255 ? img : denormalize(img);
    cv::Mat m(raw.height, raw.width, CV_8U);
    for (int y = 0; y < raw.height; ++y)
        for (int x = 0; x < raw.width; ++x)
            m.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(std::clamp(round_half_up(raw.at(y, x)), 0.0f, 255.0f));
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), m)) throw DataError("cannot write image '" + path.string() + "'");
}

inline bool is_image_file(const fs::path& p)
{
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".png" || ext == ".tif" || ext == ".tiff";
}

/// Sorted list of image files in a directory.
inline std::vector<fs::path> list_images(const fs::path& dir)
{
    if (!fs::is_directory(dir)) throw DataError("not a directory: '" + dir.string() + "'");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    return files;
}

/// Loads a directory following the `<id>_input.<ext>` / `<id>_target.<ext>`
/// convention. Files without either suffix are inputs named by their stem.
/// Source datasets require a target for every input. Images are resized
/// bilinearly to resize_to x resize_to (0 keeps the native size).
inline Dataset load_images(const fs::path& dir, int resize_to, DomainTag tag)
{
    std::map<std::string, fs::path> inputs, targets;
    for (const auto& p : list_images(dir)) {
        const std::string stem = p.stem().string();
        auto ends_with = [&](const std::string& suf) {
            return stem.size() > suf.size() && stem.compare(stem.size() - suf.size(), suf.size(), suf) == 0;
        };
        if (ends_with("_target"))
            targets[stem.substr(0, stem.size() - 7)] = p;
        else if (ends_with("_input"))
            inputs[stem.substr(0, stem.size() - 6)] = p;
        else
            inputs[stem] = p;
    }
    if (inputs.empty()) throw DataError("no input images found in '" + dir.string() + "'");
    for (const auto& [id, p] : targets)
        if (!inputs.contains(id)) throw DataError("target '" + p.string() + "' has no matching input");

    auto load = [&](const fs::path& p) {
        Image img = read_grayscale(p);
        if (resize_to > 0 && (img.height != resize_to || img.width != resize_to)) {
            img = resize_bilinear(img, resize_to, resize_to);
            for (float& v : img.values) v = std::clamp(round_half_up(v), 0.0f, 255.0f);
        }
        return img;
    };

    Dataset ds;
    ds.tag = tag;
    for (const auto& [id, p] : inputs) {
        Sample s{id, load(p), std::nullopt};
        if (auto it = targets.find(id); it != targets.end())
            s.target = load(it->second);
        else if (tag == DomainTag::Source)
            throw DataError("source sample '" + id + "' is missing its '" + id + "_target' image");
        ds.samples.push_back(std::move(s));
    }
    ds.validate();
    return ds;
}

} // namespace sitadda
