#include "io/nifti.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <vector>

namespace groupreg {

namespace {

// Header field offsets (NIfTI-1, 348-byte header).
constexpr int kSizeofHdr = 0;       // int32, must be 348
constexpr int kDim = 40;            // int16[8]
constexpr int kIntentCode = 68;     // int16
constexpr int kDatatype = 70;       // int16
constexpr int kBitpix = 72;         // int16
constexpr int kPixdim = 76;         // float32[8]
constexpr int kVoxOffset = 108;     // float32
constexpr int kSclSlope = 112;      // float32
constexpr int kSclInter = 116;      // float32
constexpr int kXyztUnits = 123;     // int8
constexpr int kDescrip = 148;       // char[80]
constexpr int kQformCode = 252;     // int16
constexpr int kSformCode = 254;     // int16
constexpr int kQuatern = 256;       // float32[6]: b, c, d, qoffset x, y, z
constexpr int kSrowX = 280;         // float32[4]
constexpr int kSrowY = 296;
constexpr int kSrowZ = 312;
constexpr int kIntentName = 328;    // char[16]
constexpr int kMagic = 344;         // char[4]
constexpr int kHeaderBytes = 348;
constexpr int kDataOffset = 352;    // header + 4-byte extension flag

constexpr int kIntentVector = 1007;

std::vector<unsigned char> read_all(const std::string& path)
{
    // gzopen reads both plain and gzip-compressed files transparently.
    gzFile f = gzopen(path.c_str(), "rb");
    if (!f)
        throw IoFailure("cannot open '" + path + "' for reading");
    std::vector<unsigned char> out;
    unsigned char chunk[1 << 16];
    int got;
    while ((got = gzread(f, chunk, sizeof(chunk))) > 0)
        out.insert(out.end(), chunk, chunk + got);
    bool ok = got == 0;
    gzclose(f);
    if (!ok)
        throw IoFailure("read error in '" + path + "' (corrupt gzip stream?)");
    return out;
}

struct FieldReader {
    const unsigned char* p;
    bool swap = false;

    std::uint16_t u16(int off) const
    {
        std::uint16_t v;
        unsigned char b[2] = {p[off], p[off + 1]};
        if (swap)
            std::swap(b[0], b[1]);
        std::memcpy(&v, b, 2);
        return v;
    }
    std::int16_t i16(int off) const { return static_cast<std::int16_t>(u16(off)); }
    std::uint32_t u32(int off) const
    {
        unsigned char b[4] = {p[off], p[off + 1], p[off + 2], p[off + 3]};
        if (swap) {
            std::swap(b[0], b[3]);
            std::swap(b[1], b[2]);
        }
        std::uint32_t v;
        std::memcpy(&v, b, 4);
        return v;
    }
    std::int32_t i32(int off) const { return static_cast<std::int32_t>(u32(off)); }
    float f32(int off) const
    {
        std::uint32_t v = u32(off);
        float f;
        std::memcpy(&f, &v, 4);
        return f;
    }
};

// The host is assumed little-endian for the in-memory reinterpretations
// below; the on-disk format is explicitly little-endian on write.
void put_u16(std::vector<unsigned char>& b, int off, std::uint16_t v)
{
    b[off] = static_cast<unsigned char>(v & 0xff);
    b[off + 1] = static_cast<unsigned char>(v >> 8);
}
void put_i16(std::vector<unsigned char>& b, int off, std::int16_t v)
{
    put_u16(b, off, static_cast<std::uint16_t>(v));
}
void put_u32(std::vector<unsigned char>& b, int off, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        b[off + i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
}
void put_i32(std::vector<unsigned char>& b, int off, std::int32_t v)
{
    put_u32(b, off, static_cast<std::uint32_t>(v));
}
void put_f32(std::vector<unsigned char>& b, int off, float f)
{
    std::uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(b, off, v);
}

int bytes_per_element(int datatype)
{
    switch (datatype) {
    case 2:
        return 1;
    case 4:
        return 2;
    case 8:
    case 16:
        return 4;
    case 64:
        return 8;
    default:
        return 0;
    }
}

double decode_element(const unsigned char* p, int datatype, bool swap)
{
    switch (datatype) {
    case 2:
        return static_cast<double>(*p);
    case 4: {
        unsigned char b[2] = {p[0], p[1]};
        if (swap)
            std::swap(b[0], b[1]);
        std::int16_t v;
        std::memcpy(&v, b, 2);
        return v;
    }
    case 8: {
        unsigned char b[4] = {p[0], p[1], p[2], p[3]};
        if (swap) {
            std::swap(b[0], b[3]);
            std::swap(b[1], b[2]);
        }
        std::int32_t v;
        std::memcpy(&v, b, 4);
        return v;
    }
    case 16: {
        unsigned char b[4] = {p[0], p[1], p[2], p[3]};
        if (swap) {
            std::swap(b[0], b[3]);
            std::swap(b[1], b[2]);
        }
        float v;
        std::memcpy(&v, b, 4);
        return v;
    }
    case 64: {
        unsigned char b[8];
        std::memcpy(b, p, 8);
        if (swap) {
            for (int i = 0; i < 4; ++i)
                std::swap(b[i], b[7 - i]);
        }
        double v;
        std::memcpy(&v, b, 8);
        return v;
    }
    default:
        return 0.0;
    }
}

void encode_element(unsigned char* p, int datatype, double v)
{
    switch (datatype) {
    case 2: {
        long long r = std::llround(v);
        *p = static_cast<unsigned char>(std::clamp<long long>(r, 0, 255));
        break;
    }
    case 4: {
        long long r = std::llround(v);
        auto s = static_cast<std::int16_t>(std::clamp<long long>(r, -32768, 32767));
        std::memcpy(p, &s, 2);
        break;
    }
    case 8: {
        long long r = std::llround(v);
        auto s = static_cast<std::int32_t>(
            std::clamp<long long>(r, std::numeric_limits<std::int32_t>::min(),
                                  std::numeric_limits<std::int32_t>::max()));
        std::memcpy(p, &s, 4);
        break;
    }
    case 16: {
        float f = static_cast<float>(v);
        std::memcpy(p, &f, 4);
        break;
    }
    case 64:
        std::memcpy(p, &v, 8);
        break;
    }
}

GridInfo grid_from_header(const FieldReader& h)
{
    GridInfo g;
    for (int a = 0; a < 3; ++a) {
        g.dims[a] = h.i16(kDim + 2 * (a + 1));
        g.spacing[a] = h.f32(kPixdim + 4 * (a + 1));
    }
    for (int a = 0; a < 3; ++a) {
        if (g.dims[a] < 1)
            throw UnsupportedDimensionality("non-positive dim in NIfTI header");
        if (!(g.spacing[a] > 0.0) || !std::isfinite(g.spacing[a]))
            throw IoFailure("non-positive pixdim in NIfTI header");
    }
    if (g.voxels() > (std::size_t(1) << 28))
        throw IoFailure("volume too large");

    if (h.i16(kSformCode) > 0) {
        for (int c = 0; c < 4; ++c) {
            g.affine[0 * 4 + c] = h.f32(kSrowX + 4 * c);
            g.affine[1 * 4 + c] = h.f32(kSrowY + 4 * c);
            g.affine[2 * 4 + c] = h.f32(kSrowZ + 4 * c);
        }
        g.affine[15] = 1.0;
    } else if (h.i16(kQformCode) > 0) {
        double b = h.f32(kQuatern), c = h.f32(kQuatern + 4), d = h.f32(kQuatern + 8);
        double a2 = 1.0 - b * b - c * c - d * d;
        double a = a2 > 0.0 ? std::sqrt(a2) : 0.0;
        double qfac = h.f32(kPixdim) < 0.0f ? -1.0 : 1.0;
        double R[3][3] = {{a * a + b * b - c * c - d * d, 2 * (b * c - a * d),
                           2 * (b * d + a * c)},
                          {2 * (b * c + a * d), a * a + c * c - b * b - d * d,
                           2 * (c * d - a * b)},
                          {2 * (b * d - a * c), 2 * (c * d + a * b),
                           a * a + d * d - b * b - c * c}};
        for (int r = 0; r < 3; ++r) {
            for (int cc = 0; cc < 3; ++cc)
                g.affine[r * 4 + cc] = R[r][cc] * g.spacing[cc] * (cc == 2 ? qfac : 1.0);
            g.affine[r * 4 + 3] = h.f32(kQuatern + 12 + 4 * r);
        }
        g.affine[15] = 1.0;
    } else {
        g.affine[0] = g.spacing[0];
        g.affine[5] = g.spacing[1];
        g.affine[10] = g.spacing[2];
        g.affine[15] = 1.0;
    }
    return g;
}

std::vector<unsigned char> build_header(const GridInfo& g, int datatype, bool vector_field)
{
    std::vector<unsigned char> b(kDataOffset, 0);
    put_i32(b, kSizeofHdr, kHeaderBytes);
    put_i16(b, kDim, vector_field ? 5 : 3);
    for (int a = 0; a < 3; ++a)
        put_i16(b, kDim + 2 * (a + 1), static_cast<std::int16_t>(g.dims[a]));
    put_i16(b, kDim + 8, 1);
    put_i16(b, kDim + 10, vector_field ? 3 : 1);
    put_i16(b, kDim + 12, 1);
    put_i16(b, kDim + 14, 1);
    if (vector_field)
        put_i16(b, kIntentCode, kIntentVector);
    put_i16(b, kDatatype, static_cast<std::int16_t>(datatype));
    put_i16(b, kBitpix, static_cast<std::int16_t>(8 * bytes_per_element(datatype)));
    put_f32(b, kPixdim, 1.0f); // qfac
    for (int a = 0; a < 3; ++a)
        put_f32(b, kPixdim + 4 * (a + 1), static_cast<float>(g.spacing[a]));
    for (int a = 4; a < 8; ++a)
        put_f32(b, kPixdim + 4 * a, 1.0f);
    put_f32(b, kVoxOffset, static_cast<float>(kDataOffset));
    put_f32(b, kSclSlope, 1.0f);
    put_f32(b, kSclInter, 0.0f);
    b[kXyztUnits] = 2; // millimetres
    std::memcpy(&b[kDescrip], "groupreg", 8);
    put_i16(b, kQformCode, 0);
    put_i16(b, kSformCode, 1);
    put_f32(b, kSrowX + 0, static_cast<float>(g.affine[0]));
    put_f32(b, kSrowX + 4, static_cast<float>(g.affine[1]));
    put_f32(b, kSrowX + 8, static_cast<float>(g.affine[2]));
    put_f32(b, kSrowX + 12, static_cast<float>(g.affine[3]));
    put_f32(b, kSrowY + 0, static_cast<float>(g.affine[4]));
    put_f32(b, kSrowY + 4, static_cast<float>(g.affine[5]));
    put_f32(b, kSrowY + 8, static_cast<float>(g.affine[6]));
    put_f32(b, kSrowY + 12, static_cast<float>(g.affine[7]));
    put_f32(b, kSrowZ + 0, static_cast<float>(g.affine[8]));
    put_f32(b, kSrowZ + 4, static_cast<float>(g.affine[9]));
    put_f32(b, kSrowZ + 8, static_cast<float>(g.affine[10]));
    put_f32(b, kSrowZ + 12, static_cast<float>(g.affine[11]));
    if (vector_field)
        std::memcpy(&b[kIntentName], "disp_mm", 7);
    std::memcpy(&b[kMagic], "n+1", 4); // includes the terminating NUL
    return b;
}

bool has_gz_suffix(const std::string& path)
{
    return path.size() >= 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes)
{
    if (has_gz_suffix(path)) {
        gzFile f = gzopen(path.c_str(), "wb");
        if (!f)
            throw IoFailure("cannot open '" + path + "' for writing");
        std::size_t done = 0;
        while (done < bytes.size()) {
            unsigned chunk = static_cast<unsigned>(
                std::min<std::size_t>(bytes.size() - done, 1u << 20));
            if (gzwrite(f, bytes.data() + done, chunk) != static_cast<int>(chunk)) {
                gzclose(f);
                throw IoFailure("write error on '" + path + "'");
            }
            done += chunk;
        }
        if (gzclose(f) != Z_OK)
            throw IoFailure("write error on '" + path + "'");
        return;
    }
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f)
        throw IoFailure("cannot open '" + path + "' for writing");
    std::size_t written = std::fwrite(bytes.data(), 1, bytes.size(), f);
    bool ok = written == bytes.size();
    ok = std::fclose(f) == 0 && ok;
    if (!ok)
        throw IoFailure("write error on '" + path + "'");
}

} // namespace

NiftiData read_nifti(const std::string& path)
{
    std::vector<unsigned char> bytes = read_all(path);
    if (bytes.size() < static_cast<std::size_t>(kHeaderBytes))
        throw TruncatedFile("'" + path + "': shorter than a NIfTI-1 header");

    FieldReader h{bytes.data(), false};
    if (h.i32(kSizeofHdr) != kHeaderBytes) {
        h.swap = true;
        if (h.i32(kSizeofHdr) != kHeaderBytes)
            throw BadMagic("'" + path + "': not a NIfTI-1 file (bad header size)");
    }
    const unsigned char* magic = bytes.data() + kMagic;
    if (!(magic[0] == 'n' && magic[1] == '+' && magic[2] == '1' && magic[3] == 0)) {
        if (magic[0] == 'n' && magic[1] == 'i' && magic[2] == '1')
            throw BadMagic("'" + path + "': two-file NIfTI (.hdr/.img) is unsupported");
        throw BadMagic("'" + path + "': not a NIfTI-1 file (bad magic)");
    }

    const int ndim = h.i16(kDim);
    const int dim4 = h.i16(kDim + 8);
    const int dim5 = h.i16(kDim + 10);
    bool is_vector;
    if (ndim == 3 || (ndim == 4 && dim4 == 1)) {
        is_vector = false;
    } else if (ndim == 5 && dim4 == 1 && dim5 == 3) {
        is_vector = true;
    } else {
        throw UnsupportedDimensionality(
            "'" + path + "': unsupported shape (dim0=" + std::to_string(ndim) +
            ", dim4=" + std::to_string(dim4) + ", dim5=" + std::to_string(dim5) +
            "); expected a 3-D volume or a 5-D 3-vector field");
    }

    const int datatype = h.i16(kDatatype);
    const int elem = bytes_per_element(datatype);
    if (elem == 0)
        throw UnsupportedDatatype("'" + path + "': unsupported datatype code " +
                                  std::to_string(datatype) +
                                  " (supported: uint8, int16, int32, float32, float64)");

    GridInfo g = grid_from_header(h);

    double vox_offset = h.f32(kVoxOffset);
    if (!(vox_offset >= kHeaderBytes) || vox_offset != std::floor(vox_offset))
        throw IoFailure("'" + path + "': invalid vox_offset");
    const std::size_t offset = static_cast<std::size_t>(vox_offset);

    const std::size_t nvox = g.voxels();
    const int ncomp = is_vector ? 3 : 1;
    const std::size_t need = offset + nvox * ncomp * static_cast<std::size_t>(elem);
    if (bytes.size() < need)
        throw TruncatedFile("'" + path + "': data truncated (" +
                            std::to_string(bytes.size()) + " bytes, need " +
                            std::to_string(need) + ")");

    float slope_raw = h.f32(kSclSlope);
    float inter_raw = h.f32(kSclInter);
    const double slope = (slope_raw == 0.0f || !std::isfinite(slope_raw))
                             ? 1.0
                             : static_cast<double>(slope_raw);
    const double inter = std::isfinite(inter_raw) ? static_cast<double>(inter_raw) : 0.0;
    const bool plain = slope == 1.0 && inter == 0.0;

    auto decode_plane = [&](std::size_t comp) {
        std::vector<double> out(nvox);
        const unsigned char* src = bytes.data() + offset + comp * nvox * elem;
        for (std::size_t i = 0; i < nvox; ++i) {
            double v = decode_element(src + i * elem, datatype, h.swap);
            out[i] = plain ? v : slope * v + inter;
        }
        return out;
    };

    NiftiData out;
    out.is_vector = is_vector;
    try {
        if (is_vector) {
            std::array<std::vector<double>, 3> comps = {decode_plane(0), decode_plane(1),
                                                        decode_plane(2)};
            out.field = VectorVolume(g, std::move(comps));
        } else {
            out.volume = Volume(g, decode_plane(0));
        }
    } catch (const Error& e) {
        throw IoFailure("'" + path + "': " + e.what());
    }
    return out;
}

Volume read_volume(const std::string& path)
{
    NiftiData d = read_nifti(path);
    if (d.is_vector)
        throw UnsupportedDimensionality("'" + path +
                                        "': expected a scalar volume, found a vector field");
    return std::move(d.volume);
}

VectorVolume read_field(const std::string& path)
{
    NiftiData d = read_nifti(path);
    if (!d.is_vector)
        throw UnsupportedDimensionality("'" + path +
                                        "': expected a vector field, found a scalar volume");
    return std::move(d.field);
}

Mask read_mask(const std::string& path)
{
    Volume v = read_volume(path);
    Mask m(v.grid);
    for (std::size_t i = 0; i < v.data.size(); ++i)
        m.data[i] = v.data[i] != 0.0;
    return m;
}

void write_volume(const std::string& path, const Volume& vol, NiftiDatatype datatype)
{
    const int dt = static_cast<int>(datatype);
    const int elem = bytes_per_element(dt);
    std::vector<unsigned char> bytes = build_header(vol.grid, dt, false);
    bytes.resize(kDataOffset + vol.data.size() * elem);
    for (std::size_t i = 0; i < vol.data.size(); ++i)
        encode_element(&bytes[kDataOffset + i * elem], dt, vol.data[i]);
    write_bytes(path, bytes);
}

void write_field(const std::string& path, const VectorVolume& field, NiftiDatatype datatype)
{
    const int dt = static_cast<int>(datatype);
    const int elem = bytes_per_element(dt);
    const std::size_t nvox = field.grid.voxels();
    std::vector<unsigned char> bytes = build_header(field.grid, dt, true);
    bytes.resize(kDataOffset + nvox * 3 * elem);
    for (int c = 0; c < 3; ++c) {
        unsigned char* dst = &bytes[kDataOffset + c * nvox * elem];
        for (std::size_t i = 0; i < nvox; ++i)
            encode_element(dst + i * elem, dt, field.comp[c][i]);
    }
    write_bytes(path, bytes);
}

void write_mask(const std::string& path, const Mask& mask)
{
    write_volume(path, mask_to_volume(mask), NiftiDatatype::kUint8);
}

} // namespace groupreg
