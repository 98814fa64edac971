#pragma once

// Everything except the command layer, which pulls in spdlog and fmt.

#include "wmg/core.hpp"
#include "wmg/graph.hpp"
#include "wmg/chain.hpp"
#include "wmg/passage.hpp"
#include "wmg/kemeny.hpp"
#include "wmg/gradients.hpp"
#include "wmg/optimizer.hpp"
#include "wmg/surveillance.hpp"
#include "wmg/traffic.hpp"
#include "wmg/generators.hpp"
#include "wmg/io.hpp"
