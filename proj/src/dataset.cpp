#include "lesyn/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "lesyn/lsf.hpp"

namespace lesyn {

namespace fs = std::filesystem;

void MetaRecord::set(const std::string& key, const std::string& value) {
    if (key.empty() || key.find_first_of("=\n") != std::string::npos || value.find('\n') != std::string::npos)
        throw InvalidArgument("meta: invalid key or value");
    values_[key] = value;
}

std::string MetaRecord::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw NotFound("meta: missing key '" + key + "'");
    return it->second;
}

std::string MetaRecord::get_or(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::string MetaRecord::to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
}

MetaRecord MetaRecord::parse(std::string_view text) {
    MetaRecord m;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw IoError("meta: malformed line '" + line + "'");
        m.values_[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return m;
}

void MetaRecord::save(const fs::path& path) const { lsf::write_file(path, to_text()); }

MetaRecord MetaRecord::load(const fs::path& path) { return parse(lsf::read_file(path)); }

std::string sample_dir_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "sample_%05zu", index);
    return buf;
}

HuWindow parse_window(const std::string& text) {
    HuWindow w;
    char extra = 0;
    if (std::sscanf(text.c_str(), "%lf,%lf%c", &w.lo, &w.hi, &extra) != 2)
        throw InvalidArgument("window must be 'lo,hi', got '" + text + "'");
    w.validate();
    return w;
}

std::string format_window(const HuWindow& w) {
    std::ostringstream s;
    s.precision(17);
    s << w.lo << ',' << w.hi;
    return s.str();
}

void write_slice_sample(const fs::path& dir, const SliceSample& s) {
    s.slice.validate();
    fs::create_directories(dir);
    lsf::write_grid(dir / "slice.lsf", s.slice.pixels);
    lsf::write_mask(dir / "liver_mask.lsf", s.liver);
    for (std::size_t k = 0; k < s.lesions.size(); ++k)
        lsf::write_mask(dir / ("lesion_mask_" + std::to_string(k) + ".lsf"), s.lesions[k]);
    MetaRecord m;
    m.set("kind", "slice");
    m.set("provenance", to_string(s.slice.provenance));
    std::ostringstream sp;
    sp.precision(17);
    sp << s.slice.row_mm << ',' << s.slice.col_mm;
    m.set("spacing", sp.str());
    m.set("window", format_window(s.window));
    m.set("lesions", std::to_string(s.lesions.size()));
    m.save(dir / "meta");
}

SliceSample read_slice_sample(const fs::path& dir) {
    const MetaRecord m = MetaRecord::load(dir / "meta");
    SliceSample s;
    s.slice.pixels = lsf::read_grid(dir / "slice.lsf");
    s.slice.provenance = provenance_from_string(m.get_or("provenance", "real"));
    if (std::sscanf(m.get_or("spacing", "1,1").c_str(), "%lf,%lf", &s.slice.row_mm, &s.slice.col_mm) != 2)
        throw IoError("meta: malformed spacing in " + dir.string());
    s.window = parse_window(m.get_or("window", "-100,400"));
    s.liver = lsf::read_mask(dir / "liver_mask.lsf");
    const int n = std::stoi(m.get_or("lesions", "0"));
    for (int k = 0; k < n; ++k) s.lesions.push_back(lsf::read_mask(dir / ("lesion_mask_" + std::to_string(k) + ".lsf")));
    s.slice.validate();
    return s;
}

void write_lesion_record(const fs::path& dir, const LesionRecord& r, const HuWindow& window) {
    fs::create_directories(dir);
    lsf::write_grid(dir / "patch.lsf", r.sample.patch);
    lsf::write_mask(dir / "mask.lsf", r.sample.mask);
    std::vector<float> bins(r.histogram.bins().begin(), r.histogram.bins().end());
    const std::int64_t shape[1] = {static_cast<std::int64_t>(bins.size())};
    lsf::write(dir / "histogram.lsf", shape, bins);
    MetaRecord m;
    m.set("kind", "lesion");
    m.set("id", r.id);
    m.set("window", format_window(window));
    m.set("rescaled", r.sample.rescaled ? "1" : "0");
    m.set("patch_size", std::to_string(r.sample.patch_size()));
    m.save(dir / "meta");
}

LesionRecord read_lesion_record(const fs::path& dir) {
    const MetaRecord m = MetaRecord::load(dir / "meta");
    LesionRecord r;
    r.id = m.get_or("id", dir.filename().string());
    r.sample.patch = lsf::read_grid(dir / "patch.lsf");
    r.sample.mask = lsf::read_mask(dir / "mask.lsf");
    r.sample.rescaled = m.get_or("rescaled", "0") == "1";
    const lsf::Array h = lsf::read(dir / "histogram.lsf");
    // Stored as f32; renormalize in double to restore exact unit mass.
    r.histogram = DensityHistogram::from_weights(std::vector<double>(h.data.begin(), h.data.end()));
    r.sample.validate();
    return r;
}

std::vector<fs::path> list_samples(const fs::path& root) {
    if (!fs::is_directory(root)) throw NotFound("dataset directory not found: " + root.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory() && fs::exists(e.path() / "meta")) out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<SliceSample> read_slice_dataset(const fs::path& root) {
    std::vector<SliceSample> out;
    for (const auto& d : list_samples(root)) out.push_back(read_slice_sample(d));
    return out;
}

std::vector<LesionRecord> read_lesion_dataset(const fs::path& root) {
    std::vector<LesionRecord> out;
    for (const auto& d : list_samples(root)) out.push_back(read_lesion_record(d));
    return out;
}

std::vector<LesionRecord> decompose_slices(const std::vector<SliceSample>& slices, int patch_size,
                                           const HuWindow* window_override) {
    std::vector<LesionRecord> out;
    for (std::size_t i = 0; i < slices.size(); ++i) {
        const HuWindow& w = window_override ? *window_override : slices[i].window;
        for (std::size_t k = 0; k < slices[i].lesions.size(); ++k) {
            LesionRecord r;
            r.id = sample_dir_name(i) + "_lesion_" + std::to_string(k);
            r.sample = extract_lesion_sample(slices[i].slice, slices[i].lesions[k], patch_size, w);
            r.histogram = compute_histogram(r.sample.patch, r.sample.mask);
            out.push_back(std::move(r));
        }
    }
    return out;
}

}  // namespace lesyn
