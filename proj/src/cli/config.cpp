#include <algorithm>
#include <sstream>

#include "json.hpp"

#include "nextdit/cli/run.hpp"
#include "nextdit/numkernel/error.hpp"

namespace nextdit::cli {

namespace {

bool has_flag(const std::vector<std::string>& args, const std::string& flag) {
    return std::any_of(args.begin(), args.end(), [&](const std::string& a) {
        return a == flag || a.rfind(flag + "=", 0) == 0;
    });
}

std::string scalar_text(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
    if (v.is_number_unsigned()) return std::to_string(v.get<unsigned long long>());
    if (v.is_number_float()) {
        std::ostringstream s;
        s.precision(17);
        s << v.get<double>();
        return s.str();
    }
    throw ConfigError("config: unsupported value " + v.dump());
}

}  // namespace

std::vector<std::string> merge_config(const std::vector<std::string>& args, const std::string& json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("config: top level must be an object");
    const std::string sub = args.size() > 1 ? args[1] : "";
    const nlohmann::json& section = doc.contains(sub) && doc[sub].is_object() ? doc[sub] : doc;

    std::vector<std::string> merged = args;
    for (const auto& [key, value] : section.items()) {
        if (value.is_object()) continue;  // another subcommand's section
        const std::string flag = "--" + key;
        if (has_flag(args, flag)) continue;
        if (value.is_boolean()) {
            if (value.get<bool>()) merged.push_back(flag);
            continue;
        }
        merged.push_back(flag);
        if (value.is_array()) {
            std::string joined;
            for (const auto& item : value) joined += (joined.empty() ? "" : ",") + scalar_text(item);
            merged.push_back(joined);
        } else {
            merged.push_back(scalar_text(value));
        }
    }
    return merged;
}

}  // namespace nextdit::cli
