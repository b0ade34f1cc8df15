#include "unissda/serialize.hpp"

#include "unissda/errors.hpp"

#include <json.hpp>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace unissda::serialize {

namespace {

using nlohmann::json;

void io_fail(const std::string& what, const std::string& path) {
    throw DataError(what + ": " + path);
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw DataError("binary stream truncated");
    return value;
}

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    throw DataError("unknown split: " + s);
}

Domain domain_from_string(const std::string& s) {
    if (s == "source") return Domain::source;
    if (s == "target") return Domain::target;
    throw DataError("unknown domain: " + s);
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    if (n == 0) return Matrix(0, 0);
    const auto d = static_cast<Eigen::Index>(rows.at(0).size());
    Matrix m(n, d);
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& row = rows.at(static_cast<std::size_t>(r));
        if (static_cast<Eigen::Index>(row.size()) != d) throw DataError("ragged matrix rows");
        for (Eigen::Index c = 0; c < d; ++c) m(r, c) = row.at(static_cast<std::size_t>(c));
    }
    return m;
}

json vector_to_json(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

Vector vector_from_json(const json& arr) {
    Vector v(static_cast<Eigen::Index>(arr.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = arr.at(static_cast<std::size_t>(i));
    return v;
}

}  // namespace

std::uint64_t fnv1a64_bytes(const void* data, std::size_t size) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    std::uint64_t h = 14695981039346656037ull;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) io_fail("cannot open file for digest", path);
    std::uint64_t h = 14695981039346656037ull;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const auto n = static_cast<std::size_t>(in.gcount());
        for (std::size_t i = 0; i < n; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ull;
        }
    }
    return h;
}

std::string digest_hex(std::uint64_t digest) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(digest));
    return buf;
}

void write_dataset_jsonl(const FeatureDataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream out(path);
    if (!out) io_fail("cannot open file for writing", path);
    json header;
    header["record"] = "header";
    header["domain"] = to_string(ds.domain);
    header["label_set"] = ds.label_set;
    out << header.dump() << '\n';
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        json rec;
        std::vector<double> feats(static_cast<std::size_t>(ds.dim()));
        for (Eigen::Index c = 0; c < ds.dim(); ++c) feats[static_cast<std::size_t>(c)] = ds.features(i, c);
        rec["features"] = feats;
        rec["class_id"] = ds.class_ids[static_cast<std::size_t>(i)];
        rec["domain"] = to_string(ds.domain);
        rec["labeled"] = ds.labeled[static_cast<std::size_t>(i)] != 0;
        rec["split"] = to_string(ds.splits[static_cast<std::size_t>(i)]);
        out << rec.dump() << '\n';
    }
    if (!out) io_fail("write failed", path);
}

FeatureDataset read_dataset_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) io_fail("cannot open file for reading", path);
    std::string line;
    if (!std::getline(in, line)) io_fail("missing header line", path);
    const json header = json::parse(line);
    if (header.value("record", "") != "header") io_fail("first line is not a header record", path);

    FeatureDataset ds;
    ds.domain = domain_from_string(header.at("domain").get<std::string>());
    ds.label_set = header.at("label_set").get<std::vector<int>>();

    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json rec = json::parse(line);
        rows.push_back(rec.at("features").get<std::vector<double>>());
        ds.class_ids.push_back(rec.at("class_id").get<int>());
        if (domain_from_string(rec.at("domain").get<std::string>()) != ds.domain) {
            io_fail("sample domain disagrees with header", path);
        }
        ds.labeled.push_back(rec.at("labeled").get<bool>() ? 1 : 0);
        ds.splits.push_back(split_from_string(rec.at("split").get<std::string>()));
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto d = n == 0 ? 0 : static_cast<Eigen::Index>(rows.front().size());
    ds.features.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = rows[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(row.size()) != d) io_fail("ragged feature rows", path);
        for (Eigen::Index c = 0; c < d; ++c) ds.features(i, c) = row[static_cast<std::size_t>(c)];
    }
    ds.validate();
    return ds;
}

void write_dataset_binary(const FeatureDataset& ds, const std::string& path) {
    ds.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) io_fail("cannot open file for writing", path);
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(ds.size()));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(ds.dim()));
    write_pod<std::uint8_t>(out, ds.domain == Domain::source ? 0 : 1);
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        for (Eigen::Index c = 0; c < ds.dim(); ++c) write_pod<double>(out, ds.features(i, c));
    }
    for (const int id : ds.class_ids) write_pod<std::int32_t>(out, id);
    for (const auto flag : ds.labeled) write_pod<std::uint8_t>(out, flag);
    for (const auto split : ds.splits) write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(split));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(ds.label_set.size()));
    for (const int id : ds.label_set) write_pod<std::int32_t>(out, id);
    if (!out) io_fail("write failed", path);
}

FeatureDataset read_dataset_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) io_fail("cannot open file for reading", path);
    const auto n = static_cast<Eigen::Index>(read_pod<std::uint64_t>(in));
    const auto d = static_cast<Eigen::Index>(read_pod<std::uint64_t>(in));
    FeatureDataset ds;
    const auto domain_tag = read_pod<std::uint8_t>(in);
    if (domain_tag > 1) io_fail("bad domain tag", path);
    ds.domain = domain_tag == 0 ? Domain::source : Domain::target;
    ds.features.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index c = 0; c < d; ++c) ds.features(i, c) = read_pod<double>(in);
    }
    ds.class_ids.resize(static_cast<std::size_t>(n));
    for (auto& id : ds.class_ids) id = read_pod<std::int32_t>(in);
    ds.labeled.resize(static_cast<std::size_t>(n));
    for (auto& flag : ds.labeled) flag = read_pod<std::uint8_t>(in);
    ds.splits.resize(static_cast<std::size_t>(n));
    for (auto& split : ds.splits) {
        const auto tag = read_pod<std::uint8_t>(in);
        if (tag > 2) io_fail("bad split tag", path);
        split = static_cast<Split>(tag);
    }
    const auto label_count = read_pod<std::uint64_t>(in);
    ds.label_set.resize(static_cast<std::size_t>(label_count));
    for (auto& id : ds.label_set) id = read_pod<std::int32_t>(in);
    ds.validate();
    return ds;
}

void write_matrix_block(std::ostream& out, const Matrix& m) {
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) write_pod<double>(out, m(r, c));
    }
}

Matrix read_matrix_block(std::istream& in) {
    const auto rows = static_cast<Eigen::Index>(read_pod<std::uint64_t>(in));
    const auto cols = static_cast<Eigen::Index>(read_pod<std::uint64_t>(in));
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = read_pod<double>(in);
    }
    return m;
}

namespace {
constexpr char kCheckpointMagic[8] = {'U', 'S', 'S', 'D', 'A', 'C', 'K', '1'};
}

void write_checkpoint_binary(const model::Model& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) io_fail("cannot open checkpoint for writing", path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    write_pod<double>(out, m.head.temperature);
    write_pod<std::uint8_t>(out, m.head.cosine_mode ? 1 : 0);
    write_matrix_block(out, m.head.weights);
    write_matrix_block(out, m.head.bias);
    write_pod<std::uint8_t>(out, m.extractor.is_identity() ? 0 : 1);
    if (!m.extractor.is_identity()) {
        write_matrix_block(out, m.extractor.weights);
        write_matrix_block(out, m.extractor.bias);
    }
    write_pod<std::uint64_t>(out, static_cast<std::uint64_t>(m.classes.size()));
    for (const int c : m.classes) write_pod<std::int32_t>(out, c);
    if (!out) io_fail("checkpoint write failed", path);
}

model::Model read_checkpoint_binary(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) io_fail("cannot open checkpoint for reading", path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
        io_fail("bad checkpoint magic", path);
    }
    model::Model m;
    m.head.temperature = read_pod<double>(in);
    m.head.cosine_mode = read_pod<std::uint8_t>(in) != 0;
    m.head.weights = read_matrix_block(in);
    m.head.bias = read_matrix_block(in);
    if (read_pod<std::uint8_t>(in) != 0) {
        m.extractor.weights = read_matrix_block(in);
        m.extractor.bias = read_matrix_block(in);
    }
    const auto count = read_pod<std::uint64_t>(in);
    m.classes.resize(static_cast<std::size_t>(count));
    for (auto& c : m.classes) c = read_pod<std::int32_t>(in);
    return m;
}

void write_checkpoint_jsonl(const model::Model& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) io_fail("cannot open checkpoint for writing", path);
    json meta;
    meta["record"] = "meta";
    meta["format_version"] = 1;
    out << meta.dump() << '\n';

    json head;
    head["record"] = "head";
    head["temperature"] = m.head.temperature;
    head["cosine_mode"] = m.head.cosine_mode;
    head["weights"] = matrix_to_json(m.head.weights);
    head["bias"] = vector_to_json(m.head.bias);
    out << head.dump() << '\n';

    json extractor;
    extractor["record"] = "extractor";
    extractor["identity"] = m.extractor.is_identity();
    if (!m.extractor.is_identity()) {
        extractor["weights"] = matrix_to_json(m.extractor.weights);
        extractor["bias"] = vector_to_json(m.extractor.bias);
    }
    out << extractor.dump() << '\n';

    json classes;
    classes["record"] = "classes";
    classes["ids"] = m.classes;
    out << classes.dump() << '\n';
    if (!out) io_fail("checkpoint write failed", path);
}

model::Model read_checkpoint_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) io_fail("cannot open checkpoint for reading", path);
    model::Model m;
    std::string line;
    bool saw_head = false, saw_extractor = false, saw_classes = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const json rec = json::parse(line);
        const std::string kind = rec.value("record", "");
        if (kind == "meta") {
            if (rec.at("format_version").get<int>() != 1) io_fail("unknown format version", path);
        } else if (kind == "head") {
            m.head.temperature = rec.at("temperature").get<double>();
            m.head.cosine_mode = rec.at("cosine_mode").get<bool>();
            m.head.weights = matrix_from_json(rec.at("weights"));
            m.head.bias = vector_from_json(rec.at("bias"));
            saw_head = true;
        } else if (kind == "extractor") {
            if (!rec.at("identity").get<bool>()) {
                m.extractor.weights = matrix_from_json(rec.at("weights"));
                m.extractor.bias = vector_from_json(rec.at("bias"));
            }
            saw_extractor = true;
        } else if (kind == "classes") {
            m.classes = rec.at("ids").get<std::vector<int>>();
            saw_classes = true;
        } else {
            io_fail("unknown checkpoint record: " + kind, path);
        }
    }
    if (!saw_head || !saw_extractor || !saw_classes) io_fail("incomplete checkpoint", path);
    return m;
}

}  // namespace unissda::serialize
