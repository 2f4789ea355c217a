use crate::nn::{
    AvgPool, BatchNorm, Conv2d, LayerKind, MaxPool, Node, Plan, Residual, Section, ZeroPad,
};

use super::{ArchVariant, Family};

const VGG_CONVS: [usize; 5] = [2, 2, 3, 3, 3];
const VGG_FILTERS: [usize; 5] = [64, 128, 256, 512, 512];
const RESNET50_BLOCKS: [usize; 4] = [3, 4, 6, 3];
const RESNET101_BLOCKS: [usize; 4] = [3, 4, 23, 3];
const RESNET_FILTERS: [usize; 4] = [64, 128, 256, 512];
const DENSENET121_BLOCKS: [usize; 4] = [6, 12, 24, 16];
const DENSENET_GROWTH: usize = 32;
const NORM_EPS: f64 = 1.001e-5;

/// Backbone graph as a top-level chain of nodes (pruned from the front during
/// backward when leading nodes are frozen).
#[derive(Debug, Clone)]
pub struct Backbone {
    pub family: Family,
    pub variant: ArchVariant,
    pub nodes: Vec<Node>,
    pub feature_dim: usize,
}

struct Builder<'a> {
    plan: &'a mut Plan,
    stage: usize,
    unit: usize,
}

impl Builder<'_> {
    #[allow(clippy::too_many_arguments)]
    fn conv(
        &mut self,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad: usize,
        bias: bool,
    ) -> Node {
        let l = self.plan.add_layer(
            name,
            LayerKind::Conv,
            Section::Backbone,
            self.stage,
            self.unit,
        );
        self.unit += 1;
        Node::Conv(Conv2d::register(
            self.plan, l, cin, cout, k, stride, pad, bias,
        ))
    }

    /// Norm attached to the unit of the convolution it normalizes.
    fn norm(&mut self, name: &str, channels: usize, unit: usize) -> Node {
        let l = self.plan.add_layer(
            name,
            LayerKind::BatchNorm,
            Section::Backbone,
            self.stage,
            unit,
        );
        Node::Norm(BatchNorm::register(self.plan, l, channels, NORM_EPS))
    }

    /// Norm following (and belonging to) the previous convolution.
    fn post_norm(&mut self, name: &str, channels: usize) -> Node {
        let unit = self.unit - 1;
        self.norm(name, channels, unit)
    }

    /// Norm preceding (and belonging to) the next convolution.
    fn pre_norm(&mut self, name: &str, channels: usize) -> Node {
        let unit = self.unit;
        self.norm(name, channels, unit)
    }
}

/// Registers the backbone's parameters in `plan` and returns its graph. Cheap
/// for every variant: no tensors are allocated.
pub fn build_backbone(family: Family, variant: ArchVariant, plan: &mut Plan) -> Backbone {
    let mut b = Builder {
        plan,
        stage: 0,
        unit: 0,
    };
    let (nodes, feature_dim) = match family {
        Family::Vgg16 => vgg16(&mut b, variant),
        Family::Resnet50 => resnet(&mut b, variant, &RESNET50_BLOCKS),
        Family::Resnet101 => resnet(&mut b, variant, &RESNET101_BLOCKS),
        Family::Densenet121 => densenet(&mut b, variant, &DENSENET121_BLOCKS),
    };
    Backbone {
        family,
        variant,
        nodes,
        feature_dim,
    }
}

fn vgg16(b: &mut Builder<'_>, v: ArchVariant) -> (Vec<Node>, usize) {
    let mut nodes = Vec::new();
    let mut cin = 3;
    for (i, (&convs, &filters)) in VGG_CONVS.iter().zip(&VGG_FILTERS).enumerate() {
        b.stage = i;
        let cout = v.width(filters);
        for j in 0..v.blocks(convs) {
            nodes.push(b.conv(
                &format!("block{}_conv{}", i + 1, j + 1),
                cin,
                cout,
                3,
                1,
                1,
                true,
            ));
            nodes.push(Node::Relu);
            cin = cout;
        }
        nodes.push(Node::MaxPool(MaxPool { size: 2, stride: 2 }));
    }
    (nodes, cin)
}

fn stem(
    b: &mut Builder<'_>,
    cout: usize,
    bias: bool,
    conv_name: &str,
    norm_name: &str,
) -> Vec<Node> {
    b.stage = 0;
    vec![
        Node::Pad(ZeroPad { pad: 3 }),
        b.conv(conv_name, 3, cout, 7, 2, 0, bias),
        b.post_norm(norm_name, cout),
        Node::Relu,
        Node::Pad(ZeroPad { pad: 1 }),
        Node::MaxPool(MaxPool { size: 3, stride: 2 }),
    ]
}

fn resnet(b: &mut Builder<'_>, v: ArchVariant, blocks: &[usize; 4]) -> (Vec<Node>, usize) {
    let mut cin = v.width(64);
    let mut nodes = stem(b, cin, true, "conv1_conv", "conv1_bn");
    for (s, (&count, &filters)) in blocks.iter().zip(&RESNET_FILTERS).enumerate() {
        b.stage = s + 1;
        let f = v.width(filters);
        for j in 0..v.blocks(count) {
            let name = format!("conv{}_block{}", s + 2, j + 1);
            let stride = if j == 0 && s > 0 { 2 } else { 1 };
            let shortcut = (j == 0).then(|| {
                Box::new(Node::Seq(vec![
                    b.conv(&format!("{name}_0_conv"), cin, 4 * f, 1, stride, 0, true),
                    b.post_norm(&format!("{name}_0_bn"), 4 * f),
                ]))
            });
            let main = Node::Seq(vec![
                b.conv(&format!("{name}_1_conv"), cin, f, 1, stride, 0, true),
                b.post_norm(&format!("{name}_1_bn"), f),
                Node::Relu,
                b.conv(&format!("{name}_2_conv"), f, f, 3, 1, 1, true),
                b.post_norm(&format!("{name}_2_bn"), f),
                Node::Relu,
                b.conv(&format!("{name}_3_conv"), f, 4 * f, 1, 1, 0, true),
                b.post_norm(&format!("{name}_3_bn"), 4 * f),
            ]);
            nodes.push(Node::Residual(Residual {
                main: Box::new(main),
                shortcut,
            }));
            cin = 4 * f;
        }
    }
    (nodes, cin)
}

fn densenet(b: &mut Builder<'_>, v: ArchVariant, blocks: &[usize; 4]) -> (Vec<Node>, usize) {
    let growth = v.width(DENSENET_GROWTH);
    let mut c = v.width(64);
    let mut nodes = stem(b, c, false, "conv1/conv", "conv1/bn");
    for (s, &count) in blocks.iter().enumerate() {
        b.stage = s + 1;
        let mut layers = Vec::new();
        for j in 0..v.blocks(count) {
            let name = format!("conv{}_block{}", s + 2, j + 1);
            let pre = b.pre_norm(&format!("{name}_0_bn"), c);
            let bottleneck = b.conv(&format!("{name}_1_conv"), c, 4 * growth, 1, 1, 0, false);
            let mid = b.post_norm(&format!("{name}_1_bn"), 4 * growth);
            let conv = b.conv(
                &format!("{name}_2_conv"),
                4 * growth,
                growth,
                3,
                1,
                1,
                false,
            );
            layers.push(Node::Seq(vec![
                pre,
                Node::Relu,
                bottleneck,
                mid,
                Node::Relu,
                conv,
            ]));
            c += growth;
        }
        nodes.push(Node::DenseBlock(layers));
        if s < blocks.len() - 1 {
            let name = format!("pool{}", s + 2);
            let reduced = c / 2;
            nodes.push(b.pre_norm(&format!("{name}_bn"), c));
            nodes.push(Node::Relu);
            nodes.push(b.conv(&format!("{name}_conv"), c, reduced, 1, 1, 0, false));
            nodes.push(Node::AvgPool(AvgPool { size: 2, stride: 2 }));
            c = reduced;
        } else {
            nodes.push(b.post_norm("bn", c));
            nodes.push(Node::Relu);
        }
    }
    (nodes, c)
}
