#pragma once

#include <filesystem>
#include <vector>

#include "lesyn/dataset.hpp"

namespace lesyn::nifti {

/// Single-channel NIfTI-1 volume with scl_slope/scl_inter applied; x varies fastest.
struct Volume {
    int nx = 0, ny = 0, nz = 0;
    double dx = 1, dy = 1, dz = 1;
    std::vector<float> data;

    float at(int x, int y, int z) const noexcept {
        return data[(static_cast<std::size_t>(z) * ny + y) * nx + x];
    }
};

/// Reads .nii or .nii.gz (uint8, int16, uint16, int32, float32, float64 payloads).
Volume read(const std::filesystem::path& path);

/// Writes an uncompressed float32 .nii (or gzip when the path ends in .gz).
void write(const std::filesystem::path& path, const Volume& v);

/// Axial slice z as rows = y, cols = x.
Slice axial_slice(const Volume& v, int z);

/// Converts a CT volume plus LiTS-style label volume (1 liver, 2 lesion) to slice samples:
/// one per axial slice containing liver, lesions split into 4-connected components.
std::vector<SliceSample> import_labeled_volume(const Volume& ct, const Volume& labels, const HuWindow& window);

}  // namespace lesyn::nifti
