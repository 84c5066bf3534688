#include "gbrs/checkpoint.hpp"

#include "gbrs/binary_io.hpp"

#include <fstream>
#include <sstream>

namespace gbrs {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, std::string_view data) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path);
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw InputError("write failed: " + path);
}

std::string serialize_checkpoint(const Network& net) {
    ByteWriter w;
    w.bytes("GBRS");
    w.u32(kCheckpointVersion);
    w.string(net.spec().to_text());
    w.u32(static_cast<std::uint32_t>(net.weights().size()));
    for (std::size_t i = 0; i < net.weights().size(); ++i) {
        w.string(net.weight_names()[i]);
        w.tensor(net.weights()[i]);
    }
    return w.buffer();
}

Network deserialize_checkpoint(std::string_view bytes) {
    ByteReader r(bytes, "checkpoint");
    if (r.bytes(4) != "GBRS") r.fail("bad magic");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
    NetworkSpec spec;
    try {
        spec = NetworkSpec::from_text(r.string());
    } catch (const Error& e) {
        throw LoadError(std::string("checkpoint header: ") + e.what());
    }
    const std::uint32_t count = r.u32();
    std::vector<std::string> names;
    std::vector<Tensor> weights;
    for (std::uint32_t i = 0; i < count; ++i) {
        names.push_back(r.string());
        weights.push_back(r.tensor());
    }
    if (!r.at_end()) r.fail("trailing bytes");
    try {
        return Network(std::move(spec), std::move(names), std::move(weights));
    } catch (const Error& e) {
        throw LoadError(std::string("checkpoint weights: ") + e.what());
    }
}

void save_checkpoint(const Network& net, const std::string& path) { write_file(path, serialize_checkpoint(net)); }

Network load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

} // namespace gbrs
