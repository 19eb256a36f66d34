#pragma once

#include "ncgl/channel.hpp"
#include "ncgl/cli.hpp"
#include "ncgl/data.hpp"
#include "ncgl/diffcomp/checkpoint.hpp"
#include "ncgl/diffcomp/gradcheck.hpp"
#include "ncgl/diffcomp/graph.hpp"
#include "ncgl/diffcomp/optimizer.hpp"
#include "ncgl/diffcomp/tensor.hpp"
#include "ncgl/findist.hpp"
#include "ncgl/manifest.hpp"
#include "ncgl/metrics.hpp"
#include "ncgl/models.hpp"
#include "ncgl/recovery.hpp"
#include "ncgl/report.hpp"
#include "ncgl/theory.hpp"
#include "ncgl/training.hpp"
#include "ncgl/verify.hpp"
