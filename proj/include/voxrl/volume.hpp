#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "voxrl/tensor.hpp"

namespace voxrl {

// 3D voxel grid of intensities in [0,1], x fastest, then y, then z.
struct Volume {
    int nx = 0, ny = 0, nz = 0;
    std::vector<float> voxels;

    Volume() = default;
    Volume(int x, int y, int z);

    float at(int x, int y, int z) const {
        return voxels[std::size_t(x) + std::size_t(nx) * (std::size_t(y) + std::size_t(ny) * z)];
    }
    float& at(int x, int y, int z) {
        return voxels[std::size_t(x) + std::size_t(nx) * (std::size_t(y) + std::size_t(ny) * z)];
    }
    std::int64_t numel() const { return std::int64_t(nx) * ny * nz; }
};

struct LabeledVolume {
    std::string id;
    Volume volume;
    int label = 0;             // 0 = normal, 1 = tumor
    std::string split;         // "train" or "test"
};

struct PhantomConfig {
    std::array<int, 3> out_dims{64, 64, 36};
    std::pair<int, int> native_z_range{28, 36};
    std::pair<int, int> lesion_count_range{1, 5};
    std::pair<double, double> lesion_radius_range{4.0, 8.0};
    double lesion_contrast = 0.5;
    double noise_sigma = 0.03;
    std::uint64_t rng_seed = 0;

    static PhantomConfig paper();
    static PhantomConfig desk();
    void validate() const;
};

// Smooth ellipsoidal "brain" field plus Gaussian noise; label 1 adds bright
// spherical blobs. Deterministic per (config seed, id); the background draws
// come from a stream independent of the lesion draws, so the label-0
// counterpart of a volume shares its background voxel for voxel.
LabeledVolume generate_phantom(const PhantomConfig& config, int label, const std::string& id);

// Block-mean pooling per z-slice down to target_xy on both in-plane axes.
Volume downsample_xy(const Volume& v, int target_xy);

// Appends zero slices at the high-z (caudal) end.
Volume pad_z(const Volume& v, int target_z);

// "VOLB" | u32le x,y,z | float32le voxels, x fastest.
void write_volume(const std::string& path, const Volume& v);
Volume read_volume(const std::string& path);

struct ManifestRow {
    std::string id;
    std::string path;  // relative to the manifest file
    int label = 0;
    std::string split;
};

struct SplitCounts {
    int train_normal = 40;
    int train_tumor = 50;
    int test_normal = 40;
    int test_tumor = 21;
    int total() const { return train_normal + train_tumor + test_normal + test_tumor; }
};

// Orders volumes into manifest rows by (split, label, id) and checks the
// requested per-split per-class counts are available.
std::vector<ManifestRow> build_manifest(const std::vector<LabeledVolume>& volumes,
                                        const SplitCounts& counts,
                                        const std::string& path_prefix);

// JSON-lines: {"id":..., "path":..., "label":0|1, "split":"train"|"test"}
void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> read_manifest(const std::string& path);

struct DatasetItem {
    std::string id;
    int label = 0;
    nn::Tensor tensor;  // [1, z, y, x]
};

// Volumes from a manifest, loaded and converted for the networks. An
// optional label map (id -> label) replaces the manifest labels; it must
// cover every manifest id.
struct Dataset {
    std::vector<DatasetItem> train;
    std::vector<DatasetItem> test;
    std::array<int, 3> dims{0, 0, 0};  // (x, y, z), uniform across items

    static Dataset load(const std::string& manifest_path,
                        const std::map<std::string, int>* label_override = nullptr);
};

nn::Tensor volume_to_tensor(const Volume& v);

}  // namespace voxrl
