/* Invokes the quantum-vulnerable API exclusively through a function
 * pointer. The volatile hook defeats constant propagation, so no direct
 * call instruction to the import exists anywhere in the binary. */
int qv_rsa_sign(const void *msg, int len, void *sig);

static int (*volatile sign_hook)(const void *, int, void *) = qv_rsa_sign;

static __attribute__((noinline)) int sign_via_hook(void)
{
    char sig[32];
    return sign_hook("corpus-hook", 11, sig);
}

int main(void)
{
    return sign_via_hook();
}
