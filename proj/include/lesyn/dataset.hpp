#pragma once

// On-disk dataset layout: one directory per sample under a root. Slice samples hold
// slice.lsf, liver_mask.lsf, lesion_mask_<k>.lsf and a `meta` key=value record.
// Lesion-sample datasets hold patch.lsf, mask.lsf, histogram.lsf and `meta`.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lesyn/imaging.hpp"

namespace lesyn {

/// Ordered key=value text record, one pair per line.
class MetaRecord {
public:
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    bool has(const std::string& key) const { return values_.contains(key); }

    std::string to_text() const;
    static MetaRecord parse(std::string_view text);

    void save(const std::filesystem::path& path) const;
    static MetaRecord load(const std::filesystem::path& path);

private:
    std::map<std::string, std::string> values_;
};

struct SliceSample {
    Slice slice;
    Mask liver;
    std::vector<Mask> lesions;
    HuWindow window;
};

struct LesionRecord {
    std::string id;
    LesionSample sample;
    DensityHistogram histogram;
};

std::string sample_dir_name(std::size_t index);

void write_slice_sample(const std::filesystem::path& dir, const SliceSample& s);
SliceSample read_slice_sample(const std::filesystem::path& dir);

void write_lesion_record(const std::filesystem::path& dir, const LesionRecord& r, const HuWindow& window);
LesionRecord read_lesion_record(const std::filesystem::path& dir);

/// Sample directories under `root`, sorted by name. Throws NotFound if `root` is missing.
std::vector<std::filesystem::path> list_samples(const std::filesystem::path& root);

std::vector<SliceSample> read_slice_dataset(const std::filesystem::path& root);
std::vector<LesionRecord> read_lesion_dataset(const std::filesystem::path& root);

/// Decomposes every lesion of every slice into (patch, mask, histogram) records.
std::vector<LesionRecord> decompose_slices(const std::vector<SliceSample>& slices, int patch_size,
                                           const HuWindow* window_override = nullptr);

HuWindow parse_window(const std::string& text);  // "lo,hi"
std::string format_window(const HuWindow& w);

}  // namespace lesyn
