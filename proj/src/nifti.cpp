#include "voxsyn/nifti.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace voxsyn::nifti {

namespace {

// nifti-1 header, 348 bytes, packed by construction (all members naturally
// aligned within the fixed layout).
struct Nifti1Header {
    std::int32_t sizeof_hdr;
    char data_type[10];
    char db_name[18];
    std::int32_t extents;
    std::int16_t session_error;
    char regular;
    char dim_info;
    std::int16_t dim[8];
    float intent_p1, intent_p2, intent_p3;
    std::int16_t intent_code;
    std::int16_t datatype;
    std::int16_t bitpix;
    std::int16_t slice_start;
    float pixdim[8];
    float vox_offset;
    float scl_slope;
    float scl_inter;
    std::int16_t slice_end;
    char slice_code;
    char xyzt_units;
    float cal_max, cal_min;
    float slice_duration;
    float toffset;
    std::int32_t glmax, glmin;
    char descrip[80];
    char aux_file[24];
    std::int16_t qform_code, sform_code;
    float quatern_b, quatern_c, quatern_d;
    float qoffset_x, qoffset_y, qoffset_z;
    float srow_x[4], srow_y[4], srow_z[4];
    char intent_name[16];
    char magic[4];
};
static_assert(sizeof(Nifti1Header) == 348, "nifti-1 header must be 348 bytes");

constexpr std::int16_t DT_UINT8 = 2;
constexpr std::int16_t DT_INT16 = 4;
constexpr std::int16_t DT_INT32 = 8;
constexpr std::int16_t DT_FLOAT32 = 16;
constexpr std::int16_t DT_FLOAT64 = 64;
constexpr std::int16_t DT_INT8 = 256;
constexpr std::int16_t DT_UINT16 = 512;

template <typename T>
void swap_bytes(T& v) {
    char* p = reinterpret_cast<char*>(&v);
    for (size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
}

void swap_header(Nifti1Header& h) {
    swap_bytes(h.sizeof_hdr);
    for (auto& d : h.dim) swap_bytes(d);
    swap_bytes(h.datatype);
    swap_bytes(h.bitpix);
    for (auto& p : h.pixdim) swap_bytes(p);
    swap_bytes(h.vox_offset);
    swap_bytes(h.scl_slope);
    swap_bytes(h.scl_inter);
}

template <typename T>
void read_payload(std::ifstream& in, Tensor& out, bool swapped, double slope, double inter) {
    std::vector<T> buf(static_cast<size_t>(out.size()));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(sizeof(T) * buf.size()));
    if (!in) throw IoError("nifti: truncated data payload");
    for (Index i = 0; i < out.size(); ++i) {
        T v = buf[static_cast<size_t>(i)];
        if (swapped) swap_bytes(v);
        out[i] = slope * static_cast<double>(v) + inter;
    }
}

VolumeFile read_nifti(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open volume: " + path.string());
    Nifti1Header h{};
    in.read(reinterpret_cast<char*>(&h), sizeof(h));
    if (!in) throw IoError("nifti: file shorter than the 348-byte header: " + path.string());
    bool swapped = false;
    if (h.sizeof_hdr != 348) {
        swap_header(h);
        swapped = true;
        if (h.sizeof_hdr != 348) throw IoError("nifti: bad header size: " + path.string());
    }
    if (std::strncmp(h.magic, "n+1", 3) != 0 && std::strncmp(h.magic, "ni1", 3) != 0)
        throw IoError("nifti: unsupported magic (expect single-file n+1): " + path.string());
    if (h.dim[0] < 3) throw IoError("nifti: not a 3D volume: " + path.string());
    for (int d = 4; d <= h.dim[0]; ++d)
        if (h.dim[d] > 1) throw IoError("nifti: >3D volumes not supported: " + path.string());

    VolumeFile vf;
    const Index nx = h.dim[1], ny = h.dim[2], nz = h.dim[3];
    if (nx <= 0 || ny <= 0 || nz <= 0) throw IoError("nifti: non-positive dims: " + path.string());
    vf.data.resize({nz, ny, nx});
    vf.spacing = {static_cast<double>(h.pixdim[3]), static_cast<double>(h.pixdim[2]),
                  static_cast<double>(h.pixdim[1])};
    const double slope = (h.scl_slope == 0.0f) ? 1.0 : static_cast<double>(h.scl_slope);
    const double inter = static_cast<double>(h.scl_inter);

    in.seekg(static_cast<std::streamoff>(h.vox_offset), std::ios::beg);
    switch (h.datatype) {
        case DT_UINT8: read_payload<std::uint8_t>(in, vf.data, swapped, slope, inter); break;
        case DT_INT8: read_payload<std::int8_t>(in, vf.data, swapped, slope, inter); break;
        case DT_INT16: read_payload<std::int16_t>(in, vf.data, swapped, slope, inter); break;
        case DT_UINT16: read_payload<std::uint16_t>(in, vf.data, swapped, slope, inter); break;
        case DT_INT32: read_payload<std::int32_t>(in, vf.data, swapped, slope, inter); break;
        case DT_FLOAT32: read_payload<float>(in, vf.data, swapped, slope, inter); break;
        case DT_FLOAT64: read_payload<double>(in, vf.data, swapped, slope, inter); break;
        default:
            throw IoError("nifti: unsupported datatype " + std::to_string(h.datatype) + ": " +
                          path.string());
    }
    return vf;
}

template <typename T>
void write_payload(std::ofstream& out, const Tensor& data) {
    std::vector<T> buf(static_cast<size_t>(data.size()));
    for (Index i = 0; i < data.size(); ++i) {
        if constexpr (std::is_integral_v<T>)
            buf[static_cast<size_t>(i)] = static_cast<T>(std::llround(data[i]));
        else
            buf[static_cast<size_t>(i)] = static_cast<T>(data[i]);
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(sizeof(T) * buf.size()));
}

void write_nifti(const std::filesystem::path& path, const Tensor& data,
                 const std::array<double, 3>& spacing, StorageType dtype) {
    if (data.rank() != 3) throw ShapeError("nifti writer expects a rank-3 tensor");
    Nifti1Header h{};
    h.sizeof_hdr = 348;
    h.regular = 'r';
    h.dim[0] = 3;
    h.dim[1] = static_cast<std::int16_t>(data.dim(2));  // x
    h.dim[2] = static_cast<std::int16_t>(data.dim(1));  // y
    h.dim[3] = static_cast<std::int16_t>(data.dim(0));  // z
    for (int d = 4; d < 8; ++d) h.dim[d] = 1;
    h.pixdim[0] = 1.0f;
    h.pixdim[1] = static_cast<float>(spacing[2]);
    h.pixdim[2] = static_cast<float>(spacing[1]);
    h.pixdim[3] = static_cast<float>(spacing[0]);
    h.vox_offset = 352.0f;
    h.scl_slope = 1.0f;
    h.scl_inter = 0.0f;
    std::memcpy(h.magic, "n+1", 4);
    switch (dtype) {
        case StorageType::Float32:
            h.datatype = DT_FLOAT32;
            h.bitpix = 32;
            break;
        case StorageType::Int16:
            h.datatype = DT_INT16;
            h.bitpix = 16;
            break;
        case StorageType::Uint8:
            h.datatype = DT_UINT8;
            h.bitpix = 8;
            break;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write volume: " + path.string());
    out.write(reinterpret_cast<const char*>(&h), sizeof(h));
    const char ext[4] = {0, 0, 0, 0};
    out.write(ext, 4);
    switch (dtype) {
        case StorageType::Float32: write_payload<float>(out, data); break;
        case StorageType::Int16: write_payload<std::int16_t>(out, data); break;
        case StorageType::Uint8: write_payload<std::uint8_t>(out, data); break;
    }
    if (!out) throw IoError("failed writing volume: " + path.string());
}

const char* storage_name(StorageType t) {
    switch (t) {
        case StorageType::Float32: return "float32";
        case StorageType::Int16: return "int16";
        case StorageType::Uint8: return "uint8";
    }
    return "float32";
}

VolumeFile read_rvol(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open volume: " + path.string());
    std::string line;
    std::getline(in, line);
    if (line != "rvol1") throw IoError("rvol: bad magic line: " + path.string());
    std::string dtype;
    VolumeFile vf;
    Index nz = 0, ny = 0, nx = 0;
    while (std::getline(in, line) && line != "data") {
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "dtype") ls >> dtype;
        else if (key == "dims") ls >> nz >> ny >> nx;
        else if (key == "spacing") ls >> vf.spacing[0] >> vf.spacing[1] >> vf.spacing[2];
        else throw IoError("rvol: unknown header key '" + key + "': " + path.string());
    }
    if (line != "data") throw IoError("rvol: missing data marker: " + path.string());
    if (nz <= 0 || ny <= 0 || nx <= 0) throw IoError("rvol: bad dims: " + path.string());
    vf.data.resize({nz, ny, nx});
    if (dtype == "float32") read_payload<float>(in, vf.data, false, 1.0, 0.0);
    else if (dtype == "int16") read_payload<std::int16_t>(in, vf.data, false, 1.0, 0.0);
    else if (dtype == "uint8") read_payload<std::uint8_t>(in, vf.data, false, 1.0, 0.0);
    else throw IoError("rvol: unsupported dtype '" + dtype + "': " + path.string());
    return vf;
}

void write_rvol(const std::filesystem::path& path, const Tensor& data,
                const std::array<double, 3>& spacing, StorageType dtype) {
    if (data.rank() != 3) throw ShapeError("rvol writer expects a rank-3 tensor");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write volume: " + path.string());
    out << "rvol1\n";
    out << "dtype " << storage_name(dtype) << "\n";
    out << "dims " << data.dim(0) << " " << data.dim(1) << " " << data.dim(2) << "\n";
    out << "spacing " << spacing[0] << " " << spacing[1] << " " << spacing[2] << "\n";
    out << "data\n";
    switch (dtype) {
        case StorageType::Float32: write_payload<float>(out, data); break;
        case StorageType::Int16: write_payload<std::int16_t>(out, data); break;
        case StorageType::Uint8: write_payload<std::uint8_t>(out, data); break;
    }
}

}  // namespace

VolumeFile read_volume(const std::filesystem::path& path) {
    const std::string ext = path.extension().string();
    if (ext == ".nii") return read_nifti(path);
    if (ext == ".rvol") return read_rvol(path);
    if (ext == ".gz")
        throw IoError("compressed volumes are not supported; decompress first: " + path.string());
    throw IoError("unknown volume container '" + ext + "': " + path.string());
}

void write_volume(const std::filesystem::path& path, const Tensor& data,
                  const std::array<double, 3>& spacing, StorageType dtype) {
    const std::string ext = path.extension().string();
    if (ext == ".nii") return write_nifti(path, data, spacing, dtype);
    if (ext == ".rvol") return write_rvol(path, data, spacing, dtype);
    throw IoError("unknown volume container '" + ext + "': " + path.string());
}

}  // namespace voxsyn::nifti
