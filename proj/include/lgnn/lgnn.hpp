#pragma once

#include "lgnn/tensor.hpp"
#include "lgnn/ops.hpp"
#include "lgnn/segment.hpp"
#include "lgnn/gradcheck.hpp"
#include "lgnn/graph.hpp"
#include "lgnn/ingest.hpp"
#include "lgnn/splits.hpp"
#include "lgnn/synthetic.hpp"
#include "lgnn/layers.hpp"
#include "lgnn/model.hpp"
#include "lgnn/train.hpp"
#include "lgnn/experiment.hpp"
