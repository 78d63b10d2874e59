#ifndef FEDBAYES_SERIALIZE_HPP
#define FEDBAYES_SERIALIZE_HPP

#include <iosfwd>
#include <string>

#include "fedbayes/bnn.hpp"

namespace fedbayes::bnn {

// Self-describing binary container: magic + version byte + mode byte, then a
// flat list of (layer index, tensor tag, shape, row-major float64) entries.
// Tags: 0 = muW, 1 = rhoW, 2 = mub, 3 = rhob.
void save_net(const VariationalNet& net, std::ostream& os);
VariationalNet load_net(std::istream& is);

// Same layout in a textual interchange form; values printed with 17
// significant digits so the round-trip is exact.
void save_net_text(const VariationalNet& net, std::ostream& os);
VariationalNet load_net_text(std::istream& is);

void save_net_file(const VariationalNet& net, const std::string& path);
VariationalNet load_net_file(const std::string& path);

} // namespace fedbayes::bnn

#endif
