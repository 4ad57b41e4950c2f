#include "muse/model_io.hpp"

namespace muse {

Checkpoint to_checkpoint(const DualEncoderModel<float>& model, const KeyValueConfig& extra)
{
    KeyValueConfig kv = extra;
    kv.merge(model.config.to_kv());
    return {kv.to_text(), model.params};
}

DualEncoderModel<float> from_checkpoint(const Checkpoint& checkpoint, const std::string& source)
{
    EncoderConfig config;
    try {
        config = EncoderConfig::from_kv(KeyValueConfig::parse(checkpoint.config_text, source));
        config.validate();
    } catch (const DataError&) {
        throw;
    } catch (const Error& e) {
        throw DataError(source + ": invalid stored config: " + e.what());
    }
    const auto expected = init_parameters<float>(config, 0);
    const auto& stored = checkpoint.params.values();
    for (const auto& [name, value] : expected.values()) {
        auto it = stored.find(name);
        if (it == stored.end()) throw DataError(source + ": missing parameter '" + name + "'");
        if (it->second.shape() != value.shape()) {
            throw DataError(source + ": parameter '" + name + "' has shape " + to_string(it->second.shape()) + ", config expects "
                            + to_string(value.shape()));
        }
    }
    if (stored.size() != expected.size()) throw DataError(source + ": checkpoint holds parameters the config does not define");
    return {config, checkpoint.params};
}

void save_model(const std::string& path, const DualEncoderModel<float>& model, const KeyValueConfig& extra)
{
    save_checkpoint(path, to_checkpoint(model, extra));
}

DualEncoderModel<float> load_model(const std::string& path)
{
    return from_checkpoint(load_checkpoint(path), path);
}

}  // namespace muse
