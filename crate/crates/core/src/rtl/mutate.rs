//! Deterministic mutation engine. A single tree walk defines the site
//! order; collection and application replay the same walk, so a site's
//! ordinal is stable and a (module, budget, seed) triple always yields
//! the same mutant set.

use super::ast::{render_rtl, render_stmt, BinOp, Expr, RtlModule, Stmt, UnOp};
use super::parser::validate;
use super::RtlError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MutationOp {
    BinaryOpReplace { from: BinOp, to: BinOp },
    CondNegate,
    ConstReplace { from: u64, to: u64 },
    SignalSwap { from: String, to: String },
    ResetBranchDelete,
}

impl MutationOp {
    pub fn slug(&self) -> &'static str {
        match self {
            MutationOp::BinaryOpReplace { .. } => "binary-op-replace",
            MutationOp::CondNegate => "cond-negate",
            MutationOp::ConstReplace { .. } => "const-replace",
            MutationOp::SignalSwap { .. } => "signal-swap",
            MutationOp::ResetBranchDelete => "reset-branch-delete",
        }
    }
}

impl fmt::Display for MutationOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MutationOp::BinaryOpReplace { from, to } => {
                write!(f, "binary-op-replace({} -> {})", from.symbol(), to.symbol())
            }
            MutationOp::CondNegate => write!(f, "cond-negate"),
            MutationOp::ConstReplace { from, to } => write!(f, "const-replace({from} -> {to})"),
            MutationOp::SignalSwap { from, to } => write!(f, "signal-swap({from} -> {to})"),
            MutationOp::ResetBranchDelete => write!(f, "reset-branch-delete"),
        }
    }
}

/// One place the catalog can edit, with the human-readable context the
/// manifest and refinement cues need.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MutationSite {
    pub op: MutationOp,
    pub location: String,
    pub affected: Vec<String>,
    pub before: String,
    pub after: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mutant {
    pub id: String,
    pub site: MutationSite,
    pub module: RtlModule,
}

/// Manifest row describing a mutant without its full source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutantRecord {
    pub id: String,
    pub operator: String,
    pub detail: String,
    pub location: String,
    pub affected: Vec<String>,
    pub before: String,
    pub after: String,
}

impl Mutant {
    pub fn record(&self) -> MutantRecord {
        MutantRecord {
            id: self.id.clone(),
            operator: self.site.op.slug().to_string(),
            detail: self.site.op.to_string(),
            location: self.site.location.clone(),
            affected: self.site.affected.clone(),
            before: self.site.before.clone(),
            after: self.site.after.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MutantManifest {
    pub schema: String,
    pub module: String,
    pub total_sites: usize,
    pub mutants: Vec<MutantRecord>,
}

fn binop_replacements(op: BinOp) -> &'static [BinOp] {
    match op {
        BinOp::Eq => &[BinOp::Ne, BinOp::Lt, BinOp::Gt],
        BinOp::Ne => &[BinOp::Eq, BinOp::Lt, BinOp::Gt],
        BinOp::Lt => &[BinOp::Eq, BinOp::Ne, BinOp::Gt],
        BinOp::Gt => &[BinOp::Eq, BinOp::Ne, BinOp::Lt],
        BinOp::Add => &[BinOp::Sub],
        BinOp::Sub => &[BinOp::Add],
        BinOp::BitAnd => &[BinOp::BitOr, BinOp::BitXor],
        BinOp::BitOr => &[BinOp::BitAnd, BinOp::BitXor],
        BinOp::BitXor => &[BinOp::BitAnd, BinOp::BitOr],
        BinOp::LAnd => &[BinOp::LOr],
        BinOp::LOr => &[BinOp::LAnd],
    }
}

fn const_replacements(c: u64) -> Vec<u64> {
    let mut out = Vec::new();
    for candidate in [c.checked_add(1), c.checked_sub(1), Some(0), Some(1)]
        .into_iter()
        .flatten()
    {
        if candidate != c && !out.contains(&candidate) {
            out.push(candidate);
        }
    }
    out
}

fn is_reset_name(name: &str) -> bool {
    let lower = name.to_ascii_lowercase();
    matches!(
        lower.as_str(),
        "rst" | "reset" | "rst_n" | "resetn" | "nrst" | "arst" | "areset"
    )
}

/// Tables the walker needs while it holds the tree mutably.
struct WalkCtx {
    /// Swappable signals with their widths; the clock is excluded.
    swap_pool: Vec<(String, u32)>,
    reset_names: BTreeSet<String>,
}

impl WalkCtx {
    fn build(m: &RtlModule) -> Self {
        let clock = m.clock().unwrap_or("").to_string();
        let mut swap_pool: Vec<(String, u32)> = Vec::new();
        let mut seen = BTreeSet::new();
        let widths = m
            .ports
            .iter()
            .map(|p| (p.name.as_str(), p.width))
            .chain(m.regs.iter().map(|r| (r.name.as_str(), r.width)))
            .chain(m.wires.iter().map(|w| (w.name.as_str(), w.width)));
        for (name, width) in widths {
            if name != clock && seen.insert(name.to_string()) {
                swap_pool.push((name.to_string(), width));
            }
        }
        swap_pool.sort();
        let mut reset_names: BTreeSet<String> = m
            .processes
            .iter()
            .filter_map(|p| p.async_reset.clone())
            .collect();
        for p in &m.ports {
            if is_reset_name(&p.name) {
                reset_names.insert(p.name.clone());
            }
        }
        WalkCtx {
            swap_pool,
            reset_names,
        }
    }

    fn is_signal(&self, name: &str) -> bool {
        self.swap_pool.iter().any(|(n, _)| n == name)
    }

    fn swap_targets(&self, name: &str) -> Vec<String> {
        let Some(width) = self
            .swap_pool
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, w)| *w)
        else {
            return Vec::new();
        };
        self.swap_pool
            .iter()
            .filter(|(n, w)| n != name && *w == width)
            .map(|(n, _)| n.clone())
            .collect()
    }

    fn reset_guard(&self, cond: &Expr) -> bool {
        match cond {
            Expr::Ident(n) => self.reset_names.contains(n),
            Expr::Unary {
                op: UnOp::Not,
                inner,
            } => matches!(&**inner, Expr::Ident(n) if self.reset_names.contains(n)),
            _ => false,
        }
    }
}

/// Shared between the collection pass and the application pass so
/// both see sites in exactly the same order.
struct Walker<'c> {
    ctx: &'c WalkCtx,
    apply_at: Option<usize>,
    count: usize,
    sites: Vec<MutationSite>,
    done: bool,
}

impl<'c> Walker<'c> {
    fn new(ctx: &'c WalkCtx, apply_at: Option<usize>) -> Self {
        Walker {
            ctx,
            apply_at,
            count: 0,
            sites: Vec::new(),
            done: false,
        }
    }

    /// Registers the next site. Returns true when this pass should
    /// apply the edit here; the caller then performs it and stops.
    fn offer(&mut self, site: impl FnOnce() -> MutationSite) -> bool {
        let ordinal = self.count;
        self.count += 1;
        match self.apply_at {
            None => {
                self.sites.push(site());
                false
            }
            Some(k) if k == ordinal => {
                self.done = true;
                true
            }
            Some(_) => false,
        }
    }

    fn walk_module(
        &mut self,
        processes: &mut [super::ast::Process],
        assigns: &mut [super::ast::Assign],
    ) {
        for (pi, proc) in processes.iter_mut().enumerate() {
            let mut if_counter = 0;
            let mut nb_counter = 0;
            let loc = format!("proc{pi}");
            self.walk_stmts(&mut proc.body, &loc, &mut if_counter, &mut nb_counter);
            if self.done {
                return;
            }
        }
        for (ai, assign) in assigns.iter_mut().enumerate() {
            let loc = format!("assign{ai}/rhs");
            let affected = vec![assign.target.clone()];
            let mut node = 0;
            self.walk_expr(&mut assign.expr, &loc, &affected, &mut node);
            if self.done {
                return;
            }
        }
    }

    fn walk_stmts(
        &mut self,
        stmts: &mut Vec<Stmt>,
        proc_loc: &str,
        if_counter: &mut usize,
        nb_counter: &mut usize,
    ) {
        let mut i = 0;
        while i < stmts.len() {
            if matches!(stmts[i], Stmt::NonBlocking { .. }) {
                let Stmt::NonBlocking { target, expr } = &mut stmts[i] else {
                    unreachable!()
                };
                let loc = format!("{proc_loc}/nb{nb_counter}/rhs");
                *nb_counter += 1;
                let affected = vec![target.clone()];
                let mut node = 0;
                self.walk_expr(expr, &loc, &affected, &mut node);
                if self.done {
                    return;
                }
                i += 1;
                continue;
            }

            let loc = format!("{proc_loc}/if{if_counter}");
            *if_counter += 1;
            let mut target_set = BTreeSet::new();
            stmts[i].collect_targets(&mut target_set);
            let affected: Vec<String> = target_set.into_iter().collect();

            {
                let Stmt::If { cond, .. } = &mut stmts[i] else {
                    unreachable!()
                };
                let negated = Expr::Unary {
                    op: UnOp::Not,
                    inner: Box::new(cond.clone()),
                };
                let before = cond.to_string();
                let after = negated.to_string();
                let aff = affected.clone();
                let site_loc = loc.clone();
                if self.offer(move || MutationSite {
                    op: MutationOp::CondNegate,
                    location: site_loc,
                    affected: aff,
                    before,
                    after,
                }) {
                    *cond = negated;
                    return;
                }
            }

            let guards_reset = {
                let Stmt::If { cond, .. } = &stmts[i] else {
                    unreachable!()
                };
                self.ctx.reset_guard(cond)
            };
            if guards_reset {
                let before = render_stmt(&stmts[i]);
                let aff = affected.clone();
                let site_loc = loc.clone();
                if self.offer(move || MutationSite {
                    op: MutationOp::ResetBranchDelete,
                    location: site_loc,
                    affected: aff,
                    before,
                    after: "<reset branch removed>".to_string(),
                }) {
                    let Stmt::If { else_body, .. } = &mut stmts[i] else {
                        unreachable!()
                    };
                    let replacement = std::mem::take(else_body);
                    stmts.splice(i..=i, replacement);
                    return;
                }
            }

            {
                let Stmt::If { cond, .. } = &mut stmts[i] else {
                    unreachable!()
                };
                let cond_loc = format!("{loc}/cond");
                let mut node = 0;
                self.walk_expr(cond, &cond_loc, &affected, &mut node);
            }
            if self.done {
                return;
            }
            {
                let Stmt::If { then_body, .. } = &mut stmts[i] else {
                    unreachable!()
                };
                self.walk_stmts(then_body, proc_loc, if_counter, nb_counter);
            }
            if self.done {
                return;
            }
            {
                let Stmt::If { else_body, .. } = &mut stmts[i] else {
                    unreachable!()
                };
                self.walk_stmts(else_body, proc_loc, if_counter, nb_counter);
            }
            if self.done {
                return;
            }
            i += 1;
        }
    }

    fn walk_expr(&mut self, expr: &mut Expr, loc: &str, affected: &[String], node: &mut usize) {
        let here = format!("{loc}/e{node}");
        *node += 1;
        // Peek at a clone to generate sites, then re-match mutably to
        // edit; expressions in the subset are small.
        match expr.clone() {
            Expr::Binary { op: from, .. } => {
                for &to in binop_replacements(from) {
                    let before = expr.to_string();
                    let mut preview = expr.clone();
                    if let Expr::Binary { op, .. } = &mut preview {
                        *op = to;
                    }
                    let after = preview.to_string();
                    let aff = affected.to_vec();
                    let site_loc = here.clone();
                    if self.offer(move || MutationSite {
                        op: MutationOp::BinaryOpReplace { from, to },
                        location: site_loc,
                        affected: aff,
                        before,
                        after,
                    }) {
                        *expr = preview;
                        return;
                    }
                }
                if let Expr::Binary { lhs, rhs, .. } = expr {
                    self.walk_expr(lhs, loc, affected, node);
                    if self.done {
                        return;
                    }
                    self.walk_expr(rhs, loc, affected, node);
                }
            }
            Expr::Unary { .. } => {
                if let Expr::Unary { inner, .. } = expr {
                    self.walk_expr(inner, loc, affected, node);
                }
            }
            Expr::Const(c) => {
                for to in const_replacements(c) {
                    let aff = affected.to_vec();
                    let site_loc = here.clone();
                    if self.offer(move || MutationSite {
                        op: MutationOp::ConstReplace { from: c, to },
                        location: site_loc,
                        affected: aff,
                        before: c.to_string(),
                        after: to.to_string(),
                    }) {
                        *expr = Expr::Const(to);
                        return;
                    }
                }
            }
            Expr::Ident(name) => {
                if !self.ctx.is_signal(&name) {
                    return; // localparam references stay fixed
                }
                for to in self.ctx.swap_targets(&name) {
                    let aff = affected.to_vec();
                    let site_loc = here.clone();
                    let from = name.clone();
                    let swapped = to.clone();
                    if self.offer(move || MutationSite {
                        op: MutationOp::SignalSwap {
                            from: from.clone(),
                            to: swapped.clone(),
                        },
                        location: site_loc,
                        affected: aff,
                        before: from,
                        after: swapped,
                    }) {
                        *expr = Expr::Ident(to);
                        return;
                    }
                }
            }
        }
    }
}

fn run_walk(m: &mut RtlModule, ctx: &WalkCtx, apply_at: Option<usize>) -> Vec<MutationSite> {
    let mut processes = std::mem::take(&mut m.processes);
    let mut assigns = std::mem::take(&mut m.assigns);
    let mut walker = Walker::new(ctx, apply_at);
    walker.walk_module(&mut processes, &mut assigns);
    m.processes = processes;
    m.assigns = assigns;
    walker.sites
}

/// Every catalog edit the module admits, in walk order. The index of
/// a site in this list is its stable ordinal.
pub fn enumerate_sites(m: &RtlModule) -> Vec<MutationSite> {
    let ctx = WalkCtx::build(m);
    let mut scratch = m.clone();
    run_walk(&mut scratch, &ctx, None)
}

/// Applies the site with the given ordinal to a copy of the module.
pub fn apply_site(m: &RtlModule, ordinal: usize) -> RtlModule {
    let ctx = WalkCtx::build(m);
    let mut mutated = m.clone();
    run_walk(&mut mutated, &ctx, Some(ordinal));
    mutated
}

fn fold_expr(e: &Expr) -> Expr {
    match e {
        Expr::Const(_) | Expr::Ident(_) => e.clone(),
        Expr::Unary { op, inner } => {
            let inner = fold_expr(inner);
            match (op, &inner) {
                (UnOp::Not, Expr::Const(v)) => Expr::Const((*v == 0) as u64),
                _ => Expr::Unary {
                    op: *op,
                    inner: Box::new(inner),
                },
            }
        }
        Expr::Binary { op, lhs, rhs } => {
            let l = fold_expr(lhs);
            let r = fold_expr(rhs);
            if let (Expr::Const(a), Expr::Const(b)) = (&l, &r) {
                let (a, b) = (*a, *b);
                let v = match op {
                    BinOp::Add => a.wrapping_add(b),
                    BinOp::Sub => a.wrapping_sub(b),
                    BinOp::BitAnd => a & b,
                    BinOp::BitOr => a | b,
                    BinOp::BitXor => a ^ b,
                    BinOp::Eq => (a == b) as u64,
                    BinOp::Ne => (a != b) as u64,
                    BinOp::Lt => (a < b) as u64,
                    BinOp::Gt => (a > b) as u64,
                    BinOp::LAnd => (a != 0 && b != 0) as u64,
                    BinOp::LOr => (a != 0 || b != 0) as u64,
                };
                return Expr::Const(v);
            }
            // Identities that erase no-op edits, so `x - 0` mutated to
            // `x + 0` is recognised as equivalent and discarded.
            match (op, &l, &r) {
                (BinOp::Add | BinOp::Sub | BinOp::BitOr | BinOp::BitXor, _, Expr::Const(0)) => {
                    return l
                }
                (BinOp::Add | BinOp::BitOr | BinOp::BitXor, Expr::Const(0), _) => return r,
                (BinOp::BitAnd | BinOp::LAnd, _, Expr::Const(0))
                | (BinOp::BitAnd | BinOp::LAnd, Expr::Const(0), _) => return Expr::Const(0),
                (BinOp::LOr, _, Expr::Const(c)) | (BinOp::LOr, Expr::Const(c), _) if *c != 0 => {
                    return Expr::Const(1)
                }
                _ => {}
            }
            Expr::Binary {
                op: *op,
                lhs: Box::new(l),
                rhs: Box::new(r),
            }
        }
    }
}

fn fold_stmts(stmts: &[Stmt]) -> Vec<Stmt> {
    stmts
        .iter()
        .map(|s| match s {
            Stmt::NonBlocking { target, expr } => Stmt::NonBlocking {
                target: target.clone(),
                expr: fold_expr(expr),
            },
            Stmt::If {
                cond,
                then_body,
                else_body,
            } => Stmt::If {
                cond: fold_expr(cond),
                then_body: fold_stmts(then_body),
                else_body: fold_stmts(else_body),
            },
        })
        .collect()
}

fn fold_module(m: &RtlModule) -> RtlModule {
    let mut folded = m.clone();
    for a in &mut folded.assigns {
        a.expr = fold_expr(&a.expr);
    }
    for p in &mut folded.processes {
        p.body = fold_stmts(&p.body);
    }
    folded
}

/// Enumerates sites, drops edits that fail re-validation or fold back
/// to the original, and samples at most `budget` survivors with the
/// seeded generator. Survivors keep walk order after sampling.
pub fn generate_mutants(m: &RtlModule, budget: usize, seed: u64) -> Result<Vec<Mutant>, RtlError> {
    let sites = enumerate_sites(m);
    if sites.is_empty() {
        return Err(RtlError::NoMutationSites);
    }
    let folded_original = fold_module(m);
    let mut survivors: Vec<(MutationSite, RtlModule)> = Vec::new();
    for (ordinal, site) in sites.iter().enumerate() {
        let mutated = apply_site(m, ordinal);
        debug_assert_ne!(&mutated, m, "site {ordinal} made no edit");
        if validate(&mutated).is_err() {
            continue; // e.g. a swap that closed a combinational loop
        }
        if fold_module(&mutated) == folded_original {
            continue;
        }
        survivors.push((site.clone(), mutated));
    }
    if survivors.is_empty() {
        return Err(RtlError::NoMutationSites);
    }
    let selected: Vec<usize> = if budget > 0 && survivors.len() > budget {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = rand::seq::index::sample(&mut rng, survivors.len(), budget).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..survivors.len()).collect()
    };
    let width = selected.len().to_string().len().max(3);
    Ok(selected
        .into_iter()
        .enumerate()
        .map(|(i, idx)| {
            let (site, module) = survivors[idx].clone();
            Mutant {
                id: format!("m{:0width$}", i + 1, width = width),
                site,
                module,
            }
        })
        .collect())
}

/// Writes `<id>.v` per mutant plus `manifest.json` into `dir`.
pub fn write_mutant_set(
    dir: &Path,
    original: &RtlModule,
    mutants: &[Mutant],
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for mutant in mutants {
        std::fs::write(
            dir.join(format!("{}.v", mutant.id)),
            render_rtl(&mutant.module),
        )?;
    }
    let manifest = MutantManifest {
        schema: "mutants/v1".to_string(),
        module: original.name.clone(),
        total_sites: enumerate_sites(original).len(),
        mutants: mutants.iter().map(Mutant::record).collect(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(dir.join("manifest.json"), json)
}

/// Reads a manifest back; mutant sources are reparsed on demand.
pub fn read_manifest(dir: &Path) -> std::io::Result<MutantManifest> {
    let text = std::fs::read_to_string(dir.join("manifest.json"))?;
    serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}
